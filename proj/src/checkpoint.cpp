#include "pointssl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace pointssl {

LoadedCheckpoint load_encoder_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();

  detail::ByteReader r{bytes};
  r.need(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  r.pos += sizeof(kCheckpointMagic);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  const std::uint64_t cfg_len = r.u64("config length");
  r.need(cfg_len, "config echo");
  const std::string echo = bytes.substr(r.pos, cfg_len);
  r.pos += cfg_len;

  const std::uint64_t count = r.u64("weight count");
  r.need(count * 8 + 8, "weights and checksum");
  const std::uint64_t stored_sum = [&] {
    detail::ByteReader tail{bytes};
    tail.pos = r.pos + count * 8;
    return tail.u64("checksum");
  }();
  if (detail::fnv1a(bytes.substr(0, r.pos + count * 8)) != stored_sum)
    throw std::runtime_error("checkpoint: checksum mismatch in '" + path + "'");

  LoadedCheckpoint out;
  out.config_echo = echo;
  out.config = parse_config_text(echo);

  ModelConfig mc;
  mc.encoder_widths = get_int_list(out.config, "encoder_widths", mc.encoder_widths);
  mc.encoder_bn = get_bool(out.config, "encoder_bn", mc.encoder_bn);
  mc.validate();

  // Shape the encoder, then fill values in declaration order.
  RngStream dummy(0);
  out.encoder = init_encoder<double>(dummy, mc);
  std::uint64_t consumed = 0;
  for_each_param(out.encoder, "encoder", [&](const std::string& name, ParamKind, double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (consumed >= count)
        throw std::runtime_error("checkpoint: too few weights for '" + name + "' (have " + std::to_string(count) +
                                 ")");
      data[i] = r.f64("weights");
      ++consumed;
    }
  });
  if (consumed != count)
    throw std::runtime_error("checkpoint: weight count " + std::to_string(count) + " does not match architecture (" +
                             std::to_string(consumed) + " expected)");
  return out;
}

}  // namespace pointssl
