#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace pnn {

/// Deterministic random source. All randomness in the library flows through
/// named streams derived from a single base seed, so runs are reproducible
/// bit-for-bit regardless of which subsystems draw and in what order.
///
/// Uniform doubles are built directly from the top 53 bits of the engine
/// output and normals use the polar Box-Muller transform, which only touches
/// log/sqrt. std::*_distribution is avoided because its output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derive the seeded stream named `name` from `base_seed`. Distinct names
  /// give statistically independent streams.
  static Rng stream(std::uint64_t base_seed, std::string_view name) {
    return Rng(mix(base_seed ^ fnv1a(name)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Modulo bias is < 2^-40 for any n this library uses.
    return engine_() % n;
  }

  /// Standard normal via Box-Muller (polar form, pair-cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  // splitmix64 finalizer; spreads low-entropy seeds over the full state.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pnn
