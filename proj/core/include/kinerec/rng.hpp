#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace kinerec {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic RNG with portable output: mt19937_64 (bit-exact across
/// platforms by the standard) plus hand-rolled uniform / Box-Muller mappings,
/// so draws never depend on implementation-defined distributions.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1), 53-bit resolution. Consumes one engine draw.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Consumes one engine draw.
  int uniform_int(int n) {
    const int v = static_cast<int>(uniform() * n);
    return v >= n ? n - 1 : v;
  }

  /// Standard normal via Box-Muller (cosine branch). Consumes two engine draws.
  double normal() {
    double g1, g2;
    normal_pair(g1, g2);
    return g1;
  }

  /// Two independent standard normals from one Box-Muller transform.
  /// Consumes exactly two engine draws.
  void normal_pair(double& g1, double& g2) {
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    g1 = radius * std::cos(2.0 * M_PI * u2);
    g2 = radius * std::sin(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kinerec
