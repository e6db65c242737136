#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace netalloc {

using Rng = std::mt19937_64;

/// Deterministically mixes a base seed with a stream index (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Engine for an independent substream of `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n);

/// Normal(mean, sd) restricted to [lo, hi] by resampling until inside.
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

}  // namespace netalloc
