#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "warpsdf/common.hpp"

namespace warpsdf {

// Deterministic RNG wrapper. Distribution math is done explicitly (not via
// std distributions) so draws are reproducible across standard libraries and
// the stream state serializes portably.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // in [0, n)
    return int(std::min<std::uint64_t>(n - 1, std::uint64_t(uniform() * n)));
  }

  // Box-Muller without caching; two raw draws per normal keeps the stream
  // layout independent of call interleaving.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    require(!is.fail(), "rng: malformed serialized state");
  }

 private:
  std::mt19937_64 eng_;
};

// splitmix64; used to derive independent per-ray/per-step seeds from
// (seed, step, index) without touching the master stream.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ull + b + (c << 32 | c >> 32);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace warpsdf
