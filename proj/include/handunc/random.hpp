#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace handunc {

using Rng = std::mt19937_64;

/// Named substreams derived from the single user-facing seed.
///
/// Every component draws from its own generator seeded with
/// `derive_seed(seed, stream)`, so adding draws in one component never
/// shifts the sequence seen by another. Per-record streams (dataset
/// samples) further mix in the record id.
enum class Stream : std::uint64_t {
  DatasetSample = 1,
  ParamInit = 2,
  VarianceHeadInit = 3,
  FullHeadInit = 4,
  Shuffle = 5,
  Reparam = 6,
  Sampling = 7,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream))) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

/// Column-major fill with i.i.d. N(0, 1) draws.
inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

}  // namespace handunc
