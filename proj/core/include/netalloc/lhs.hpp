#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace netalloc {

/// n x d Latin hypercube on [lower, upper]: every column has exactly one
/// point in each of n equal strata, jittered uniformly inside its stratum.
/// Among `restarts` random designs the one with the largest minimum pairwise
/// distance (in unit-cube coordinates) is returned.
Eigen::MatrixXd latin_hypercube(Eigen::Index n, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                std::uint64_t seed, int restarts = 20);

/// Smallest Euclidean distance between distinct rows.
double min_pairwise_distance(const Eigen::MatrixXd& points);

}  // namespace netalloc
