#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "lopt/ndarray.hpp"

namespace lopt {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (seed, tag...) so that unrelated consumers of
/// the same user seed never share random numbers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

inline NdArray normal_array(const Shape& shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  NdArray a(shape);
  for (double& v : a.values()) v = n(rng);
  return a;
}

inline NdArray uniform_array(const Shape& shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  NdArray a(shape);
  for (double& v : a.values()) v = u(rng);
  return a;
}

}  // namespace lopt
