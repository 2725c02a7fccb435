#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace deskrl {

// Counter-based pseudo-random stream. Every draw is a pure hash of
// (seed, position), so a stream is fully described by those two numbers:
// restoring them reproduces the remaining draws bit-for-bit, and derive()
// hands out independent child streams keyed by an integer. That is what
// makes per-sample streams like root.derive(sample_index) reproducible
// no matter in which order samples are actually processed.
class RngState {
 public:
  RngState() = default;
  explicit RngState(std::uint64_t seed) : seed_(seed) {}

  static RngState restore(std::uint64_t seed, std::uint64_t position) {
    RngState r(seed);
    r.pos_ = position;
    return r;
  }

  // Independent child stream keyed by `stream`. Children of distinct keys
  // (or of distinct parents) do not overlap in any draw we care about.
  RngState derive(std::uint64_t stream) const {
    return RngState(mix(seed_ ^ mix(stream + 0x9E3779B97F4A7C15ULL)));
  }

  std::uint64_t next_u64() {
    ++pos_;
    return mix(seed_ + pos_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform in [0, 1), 53 usable bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; consumes exactly two draws per call.
  double next_gaussian() {
    double u1 = 1.0 - next_double();  // (0, 1], keeps the log finite
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return pos_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t pos_ = 0;
};

}  // namespace deskrl
