#include "kausal/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kausal {

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::vector<std::size_t> SeededRng::permutation(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

SeededRng SeededRng::fork(std::uint64_t tag) const {
  // Mix the tag through the finalizer so nearby tags decorrelate.
  std::uint64_t z = seed_ ^ (tag + 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return SeededRng(z ^ (z >> 31));
}

std::vector<double> standard_normal(SeededRng& rng, std::size_t n) {
  if (n < 1) throw std::invalid_argument("standard_normal: n must be >= 1");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.normal();
  return out;
}

}  // namespace kausal
