#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lot {

// Deterministic helpers on top of mt19937_64. The std distribution objects are
// implementation-defined, so all draws go through these to keep outputs
// byte-identical across standard libraries.

inline double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

// Uniform in [-a, a].
inline double uniform_sym(std::mt19937_64& rng, double a) {
  return (2.0 * uniform01(rng) - 1.0) * a;
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace lot
