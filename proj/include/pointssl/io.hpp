#pragma once

#include <string>
#include <vector>

#include "pointssl/geometry.hpp"
#include "pointssl/sequence.hpp"

namespace pointssl {

// ASCII XYZ: one `x y z` triple per line, optional trailing `# label <int>`.
void save_cloud_xyz(const PointCloud& cloud, const std::string& path);
PointCloud load_cloud_xyz(const std::string& path);

// Binary: magic "PCB1", little-endian u64 count, then count x 3 f32 values.
void save_cloud_binary(const PointCloud& cloud, const std::string& path);
PointCloud load_cloud_binary(const std::string& path);

// Dispatch on extension: .xyz or .pcb.
void save_cloud(const PointCloud& cloud, const std::string& path);
PointCloud load_cloud(const std::string& path);

// All *.xyz / *.pcb files in a directory, sorted by filename.
std::vector<PointCloud> load_cloud_dir(const std::string& dir);

// A depth sequence directory holds `intrinsics.txt` (fx fy cx cy width
// height), and per frame `frame_%06d.depth` (magic "DPT1", u32 width, u32
// height, row-major f32 meters) plus `frame_%06d.pose` (12 decimals: row-major
// 3x3 rotation, then translation).
void save_depth_sequence(const DepthSequence& seq, const std::string& dir);
DepthSequence load_depth_sequence(const std::string& dir);

}  // namespace pointssl
