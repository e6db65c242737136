#include "netalloc/lhs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "netalloc/random.hpp"

namespace netalloc {

double min_pairwise_distance(const Eigen::MatrixXd& points) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j)
      best = std::min(best, (points.row(i) - points.row(j)).squaredNorm());
  return std::sqrt(best);
}

namespace {

Eigen::MatrixXd unit_design(Eigen::Index n, Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd out(n, d);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i)
      out(i, k) = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + unif(rng)) / static_cast<double>(n);
  }
  return out;
}

}  // namespace

Eigen::MatrixXd latin_hypercube(Eigen::Index n, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                std::uint64_t seed, int restarts) {
  if (n < 1) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  if (lower.size() != upper.size()) throw std::invalid_argument("latin_hypercube: bound size mismatch");
  if (((upper - lower).array() < 0.0).any() || !lower.allFinite() || !upper.allFinite())
    throw std::invalid_argument("latin_hypercube: invalid bounds");
  const Eigen::Index d = lower.size();
  Rng rng = make_rng(seed, 0x1115);

  Eigen::MatrixXd best = unit_design(n, d, rng);
  double best_score = min_pairwise_distance(best);
  for (int r = 1; r < std::max(restarts, 1); ++r) {
    Eigen::MatrixXd cand = unit_design(n, d, rng);
    const double score = min_pairwise_distance(cand);
    if (score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  const Eigen::RowVectorXd width = (upper - lower).transpose();
  Eigen::MatrixXd out = best.array().rowwise() * width.array();
  out.rowwise() += lower.transpose();
  return out;
}

}  // namespace netalloc
