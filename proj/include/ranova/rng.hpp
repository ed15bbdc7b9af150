#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace ranova {

// Deterministic random streams. We avoid <random> distributions on purpose:
// their output is implementation-defined, and reproducibility across
// compilers matters more here than raw speed.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable hash combine used to derive independent child seeds from a master
// seed, e.g. one stream per replication and per sampling role.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
  splitmix64(s);
  return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix_seed(mix_seed(master, stream), index);
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; uses 1-u so the log argument is in (0,1].
  double normal() {
    double u = 1.0 - uniform();
    double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) *
           std::cos(2.0 * std::numbers::pi * v);
  }

  // Integer in [0, n). Modulo bias is irrelevant for our purposes; what
  // matters is that the draw sequence is fixed.
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      auto j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
  }

 private:
  std::uint64_t state_;
};

}  // namespace ranova
