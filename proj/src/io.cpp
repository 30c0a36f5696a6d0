#include "pointssl/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pointssl {

namespace fs = std::filesystem;

namespace {

std::string read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_all(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::string& bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

float get_f32(const std::string& bytes, std::size_t at) { return std::bit_cast<float>(get_u32(bytes, at)); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_cloud_xyz(const PointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    f << fmt_double(cloud.points(0, i)) << ' ' << fmt_double(cloud.points(1, i)) << ' '
      << fmt_double(cloud.points(2, i)) << '\n';
  }
  if (cloud.label >= 0) f << "# label " << cloud.label << '\n';
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

PointCloud load_cloud_xyz(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<Eigen::Vector3d> pts;
  int label = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream in(line.substr(1));
      std::string word;
      if (in >> word && word == "label") {
        if (!(in >> label) || label < 0)
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed label line");
      }
      continue;
    }
    std::istringstream in(line);
    Eigen::Vector3d p;
    if (!(in >> p.x() >> p.y() >> p.z()))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 'x y z', got '" + line + "'");
    std::string extra;
    if (in >> extra)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": trailing content '" + extra + "'");
    pts.push_back(p);
  }
  if (pts.empty()) throw std::runtime_error(path + ": no points");
  PointCloud cloud;
  cloud.label = label;
  cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) cloud.points.col(static_cast<Eigen::Index>(i)) = pts[i];
  cloud.validate();
  return cloud;
}

constexpr char kCloudMagic[4] = {'P', 'C', 'B', '1'};

void save_cloud_binary(const PointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::string out(kCloudMagic, sizeof(kCloudMagic));
  put_u64(out, static_cast<std::uint64_t>(cloud.size()));
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a) put_f32(out, static_cast<float>(cloud.points(a, i)));
  write_all(path, out);
}

PointCloud load_cloud_binary(const std::string& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCloudMagic, sizeof(kCloudMagic)) != 0)
    throw std::runtime_error(path + ": bad magic (expected PCB1)");
  const std::uint64_t count = get_u64(bytes, 4);
  if (count == 0) throw std::runtime_error(path + ": empty point cloud");
  const std::uint64_t expected = 12 + count * 12;
  if (bytes.size() < expected)
    throw std::runtime_error(path + ": truncated, missing " + std::to_string(expected - bytes.size()) + " bytes");
  if (bytes.size() > expected)
    throw std::runtime_error(path + ": " + std::to_string(bytes.size() - expected) + " trailing bytes");
  PointCloud cloud;
  cloud.points.resize(3, static_cast<Eigen::Index>(count));
  std::size_t at = 12;
  for (std::uint64_t i = 0; i < count; ++i) {
    for (int a = 0; a < 3; ++a) {
      cloud.points(a, static_cast<Eigen::Index>(i)) = get_f32(bytes, at);
      at += 4;
    }
  }
  cloud.validate();
  return cloud;
}

void save_cloud(const PointCloud& cloud, const std::string& path) {
  if (path.ends_with(".xyz")) return save_cloud_xyz(cloud, path);
  if (path.ends_with(".pcb")) return save_cloud_binary(cloud, path);
  throw std::runtime_error("unknown point cloud extension for '" + path + "' (expected .xyz or .pcb)");
}

PointCloud load_cloud(const std::string& path) {
  if (path.ends_with(".xyz")) return load_cloud_xyz(path);
  if (path.ends_with(".pcb")) return load_cloud_binary(path);
  throw std::runtime_error("unknown point cloud extension for '" + path + "' (expected .xyz or .pcb)");
}

std::vector<PointCloud> load_cloud_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string p = entry.path().string();
    if (p.ends_with(".xyz") || p.ends_with(".pcb")) files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .xyz or .pcb files in '" + dir + "'");
  std::vector<PointCloud> clouds;
  clouds.reserve(files.size());
  for (const auto& p : files) clouds.push_back(load_cloud(p));
  return clouds;
}

// ---------------------------------------------------------------------------

constexpr char kDepthMagic[4] = {'D', 'P', 'T', '1'};

namespace {

std::string frame_name(int index, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d%s", index, suffix);
  return buf;
}

}  // namespace

void save_depth_sequence(const DepthSequence& seq, const std::string& dir) {
  seq.validate();
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "intrinsics.txt", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write intrinsics in '" + dir + "'");
    f << fmt_double(seq.intrinsics.fx) << ' ' << fmt_double(seq.intrinsics.fy) << ' '
      << fmt_double(seq.intrinsics.cx) << ' ' << fmt_double(seq.intrinsics.cy) << ' ' << seq.intrinsics.width << ' '
      << seq.intrinsics.height << '\n';
  }
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const DepthFrame& frame = seq.frames[i];
    std::string out(kDepthMagic, sizeof(kDepthMagic));
    put_u32(out, static_cast<std::uint32_t>(frame.width));
    put_u32(out, static_cast<std::uint32_t>(frame.height));
    for (float d : frame.data) put_f32(out, d);
    write_all((fs::path(dir) / frame_name(static_cast<int>(i), ".depth")).string(), out);

    const CameraPose& pose = seq.poses[i];
    std::ofstream f(fs::path(dir) / frame_name(static_cast<int>(i), ".pose"), std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write pose in '" + dir + "'");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f << fmt_double(pose.rotation(r, c)) << (r == 2 && c == 2 ? "" : " ");
    for (int a = 0; a < 3; ++a) f << ' ' << fmt_double(pose.translation[a]);
    f << '\n';
  }
}

DepthSequence load_depth_sequence(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
  DepthSequence seq;
  {
    std::ifstream f(fs::path(dir) / "intrinsics.txt");
    if (!f) throw std::runtime_error("missing intrinsics.txt in '" + dir + "'");
    double w = 0, h = 0;
    if (!(f >> seq.intrinsics.fx >> seq.intrinsics.fy >> seq.intrinsics.cx >> seq.intrinsics.cy >> w >> h))
      throw std::runtime_error(dir + "/intrinsics.txt: expected six decimals (fx fy cx cy width height)");
    seq.intrinsics.width = static_cast<int>(w);
    seq.intrinsics.height = static_cast<int>(h);
    seq.intrinsics.validate();
  }
  for (int index = 0;; ++index) {
    const fs::path depth_path = fs::path(dir) / frame_name(index, ".depth");
    if (!fs::exists(depth_path)) {
      if (index == 0) throw std::runtime_error("no frame_000000.depth in '" + dir + "'");
      break;
    }
    const fs::path pose_path = fs::path(dir) / frame_name(index, ".pose");
    if (!fs::exists(pose_path))
      throw std::runtime_error("missing pose for frame " + std::to_string(index) + " in '" + dir + "'");

    const std::string bytes = read_all(depth_path.string());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kDepthMagic, sizeof(kDepthMagic)) != 0)
      throw std::runtime_error(depth_path.string() + ": bad magic (expected DPT1)");
    DepthFrame frame;
    frame.width = static_cast<int>(get_u32(bytes, 4));
    frame.height = static_cast<int>(get_u32(bytes, 8));
    const std::uint64_t expected = 12 + static_cast<std::uint64_t>(frame.width) * frame.height * 4;
    if (bytes.size() != expected)
      throw std::runtime_error(depth_path.string() + ": size " + std::to_string(bytes.size()) + ", expected " +
                               std::to_string(expected) + " bytes");
    frame.data.resize(static_cast<std::size_t>(frame.width) * frame.height);
    for (std::size_t i = 0; i < frame.data.size(); ++i) frame.data[i] = get_f32(bytes, 12 + i * 4);

    std::ifstream pf(pose_path);
    CameraPose pose;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (!(pf >> pose.rotation(r, c)))
          throw std::runtime_error(pose_path.string() + ": expected 12 decimals (rotation then translation)");
    for (int a = 0; a < 3; ++a)
      if (!(pf >> pose.translation[a]))
        throw std::runtime_error(pose_path.string() + ": expected 12 decimals (rotation then translation)");
    try {
      pose.validate(1e-6);
    } catch (const std::exception& e) {
      throw std::runtime_error(pose_path.string() + ": " + e.what());
    }

    seq.frames.push_back(std::move(frame));
    seq.poses.push_back(pose);
  }
  seq.validate();
  return seq;
}

}  // namespace pointssl
