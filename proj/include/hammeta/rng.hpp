// Deterministic random numbers. mt19937_64 output is pinned by the standard;
// the distributions here are written out so streams are bit-identical across
// platforms (std::uniform_real_distribution is not).
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace hammeta {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  std::uint64_t next_below(std::uint64_t n) { return gen_() % n; }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal, Box-Muller. Two uniforms per draw, no cached state.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Independent stream for worker/trajectory `index`. splitmix64 mixing keeps
  // nearby indices decorrelated.
  static Rng split(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return Rng(z);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace hammeta
