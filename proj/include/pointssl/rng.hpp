#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace pointssl {

// Counter-based splittable PRNG built on the splitmix64 finalizer.
//
// A stream is identified by its origin state, derived from (seed, stream_id).
// Output i is mix64(origin + (i+1)*kGamma), so the sequence depends only on
// the origin. Child streams are derived from the parent's origin and a child
// index; the pre-mix value is injective in the index, so distinct indices
// yield distinct streams. All draws are pure integer/IEEE-754 arithmetic and
// reproduce bit-for-bit across platforms.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : origin_(mix64(seed + kGamma * (stream_id + 1))), state_(origin_) {}

  // Weyl-sequence increment from Vigna's splitmix64 reference.
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  // Distinct odd multiplier used only for child derivation.
  static constexpr std::uint64_t kChildGamma = 0xA24BAED4963EE407ull;

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix64(state_);
  }

  // Child stream `index` of this stream, independent of how many values the
  // parent has already produced.
  RngStream child(std::uint64_t index) const {
    RngStream c;
    c.origin_ = mix64(origin_ + kChildGamma * (index + 1));
    c.state_ = c.origin_;
    return c;
  }

  std::uint64_t origin() const { return origin_; }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x = next_u64();
    while (x > limit) x = next_u64();
    return x % n;
  }

  int uniform_int(int lo, int hi_exclusive) {
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi_exclusive - lo)));
  }

  // Standard normal via Box-Muller; consumes exactly two draws per call.
  double gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t origin_ = 0;
  std::uint64_t state_ = 0;
};

}  // namespace pointssl
