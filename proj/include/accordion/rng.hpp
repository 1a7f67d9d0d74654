#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "accordion/errors.hpp"

namespace accordion {

// Counter-based deterministic random stream (SplitMix64 mixing). The n-th
// output is a pure function of (seed, n), so streams can be replayed and
// compared across platforms; there is no global state anywhere in the
// library. Substreams are derived by tag so independent consumers (init,
// shuffling, depth sampling, ...) never contend for one sequence.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed) {}

  // Finalizer from SplitMix64; full-period 64-bit mixer.
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed() const { return seed_; }

  // Independent child stream; a pure function of (seed, tag) so it does not
  // depend on how many draws the parent has made.
  RngState derive(std::uint64_t tag) const {
    return RngState(mix64(seed_ ^ mix64(tag ^ 0xA5A5A5A5A5A5A5A5ull)));
  }

  std::uint64_t next_u64() { return mix64(seed_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. u1 is mapped into (0, 1] so the log is
  // always finite.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_index: n must be positive");
    return next_u64() % n;
  }

  // In-place Fisher-Yates. This is the one shuffle used for epoch orderings;
  // anything that needs to reproduce an ordering replays it with the same
  // stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace accordion
