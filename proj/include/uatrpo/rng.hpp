#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace uatrpo {

// Stream ids for the independent purposes a training run draws randomness for.
// Adding draws to one stream never shifts another.
enum class Stream : std::uint64_t {
  Rollout = 1,
  Evaluation = 2,
  PolicyInit = 3,
  ValueInit = 4,
  Projection = 5,
  Subsample = 6,
  Test = 99,
};

/// Counter-based generator: draw i of stream s under seed k is a pure hash of
/// (k, s, i). Output depends only on integer arithmetic, so sequences are
/// identical across platforms; normals use Box-Muller on top of it.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}
  SeededRng(std::uint64_t seed, Stream stream) : SeededRng(seed, static_cast<std::uint64_t>(stream)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  // Independent child generator; the parent is left untouched.
  SeededRng split(std::uint64_t child) const {
    return SeededRng(seed_, mix(stream_ * 0x9E3779B97F4A7C15ULL + child + 1));
  }
  SeededRng split(Stream child) const { return split(static_cast<std::uint64_t>(child)); }

  std::uint64_t next_u64() {
    const std::uint64_t key = mix(seed_ ^ mix(stream_ + 0xD1B54A32D192ED03ULL));
    return mix(key + 0x9E3779B97F4A7C15ULL * (++counter_));
  }

  // Uniform in the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; the bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace uatrpo
