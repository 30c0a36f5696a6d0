#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointssl/config.hpp"
#include "pointssl/model.hpp"

namespace pointssl {

// Encoder checkpoint: magic, version, config echo, flat little-endian f64
// weight arrays in declaration order, trailing FNV-1a checksum.
inline constexpr char kCheckpointMagic[8] = {'P', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > bytes.size())
      throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what + " (missing " +
                               std::to_string(pos + n - bytes.size()) + " bytes)");
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

}  // namespace detail

template <typename Scalar>
void save_encoder_checkpoint(const std::string& path, const EncoderParams<Scalar>& encoder,
                             const std::string& config_echo) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, config_echo.size());
  out += config_echo;

  std::vector<double> values;
  for_each_param(const_cast<EncoderParams<Scalar>&>(encoder), "encoder",
                 [&](const std::string&, ParamKind, Scalar* data, Eigen::Index n) {
                   for (Eigen::Index i = 0; i < n; ++i) values.push_back(static_cast<double>(data[i]));
                 });
  detail::put_u64(out, values.size());
  for (double v : values) detail::put_f64(out, v);
  detail::put_u64(out, detail::fnv1a(out));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

struct LoadedCheckpoint {
  EncoderParams<double> encoder;
  ConfigMap config;
  std::string config_echo;
};

LoadedCheckpoint load_encoder_checkpoint(const std::string& path);

}  // namespace pointssl
