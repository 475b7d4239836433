#pragma once

#include <cstdint>
#include <random>

#include "tabguide/grad_engine.hpp"

namespace tabguide {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` of a run, e.g. row_seed = derive_seed(run_seed, row).
constexpr std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index) {
  return mix64(mix64(run_seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace tabguide
