#pragma once

#include <cstdint>
#include <vector>

namespace kausal {

// splitmix64: counter-style state advance with a fixed finalizer, so a seed
// produces the same stream on every platform. All randomness in the library
// (permutations, feature frequencies, weight init) flows through this.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n) via multiply-shift.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal();

  // Fisher-Yates in-place shuffle of indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  // Derive an independent stream for a sub-task (member index, permutation
  // round) without disturbing this stream.
  SeededRng fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// n independent standard-normal draws.
std::vector<double> standard_normal(SeededRng& rng, std::size_t n);

}  // namespace kausal
