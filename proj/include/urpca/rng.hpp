#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <cmath>

namespace urpca {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent substream seed for (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0xa5a5a5a55a5a5a5aULL));
}

/// Deterministic random stream. Distribution transforms are implemented here
/// (not with std:: distributions) so that the byte output of generation is a
/// pure function of the seed, independent of the standard library build.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : gen_(derive_seed(seed, stream)) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, span)
  std::uint64_t bounded(std::uint64_t span) {
    const std::uint64_t threshold = (0 - span) % span;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % span;
    }
  }

  // uniform integer in [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(bounded(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // standard normal pair (Box-Muller)
  std::pair<double, double> normal_pair() {
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double phi = 2.0 * 3.14159265358979323846 * uniform();
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  double normal() { return normal_pair().first; }

private:
  std::mt19937_64 gen_;
};

}  // namespace urpca
