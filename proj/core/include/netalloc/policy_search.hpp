#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "netalloc/allocation_policy.hpp"
#include "netalloc/bayes_inference.hpp"
#include "netalloc/rollout_value.hpp"
#include "netalloc/surrogate.hpp"

namespace netalloc {

/// Box for (alpha0, alpha_1..alpha_q): alpha0 in [0, alpha0_max], alpha_k in
/// [-alpha_bound, alpha_bound]. Points are always ordered alpha0 first.
struct SearchSpace {
  Index q = 0;
  double alpha_bound = 5.0;
  double alpha0_max = 1.0;
  int n_initial = 100;
  int n_sequential = 50;
  int n_candidates = 1000;
  int n_polish = 10;

  Index dimension() const { return q + 1; }
  Eigen::VectorXd lower() const;
  Eigen::VectorXd upper() const;
  /// Throws ConfigError on non-finite bounds or n_initial < q + 2.
  void validate() const;
};

Eigen::MatrixXd lhs_design(const SearchSpace& space, std::uint64_t seed);

/// Raw Monte Carlo loss plus 1e-4 times the squared norm of the full point.
double ridge_loss(const Eigen::VectorXd& point, const LossEstimate& raw);
inline constexpr double kRidgePenalty = 1e-4;

struct TraceEntry {
  int iter = 0;
  Eigen::VectorXd point;
  double loss = 0.0;     // value that was minimized
  double loss_se = 0.0;
  bool is_initial = false;
};

struct SearchResult {
  Eigen::VectorXd best_point;
  double best_loss = 0.0;
  Index best_index = 0;
  std::vector<TraceEntry> trace;
};

struct Evaluation {
  double value = 0.0;
  double std_error = 0.0;
};
/// Objective called with the point and its 0-based evaluation index.
using SearchObjective = std::function<Evaluation(const Eigen::VectorXd& point, int iter)>;

/// Latin hypercube start, then n_sequential rounds of: refit the kriging
/// surrogate, maximize expected improvement over uniform candidates with
/// coordinate pattern-search polish of the best few, evaluate the winner.
/// Returns the best evaluated point.
SearchResult minimize_expected_improvement(const SearchObjective& objective, const SearchSpace& space,
                                           std::uint64_t seed);

struct PolicySearchResult {
  PolicyParams policy;
  SearchResult search;
};

/// Minimizes the ridge-stabilized rollout loss over the search box.
PolicySearchResult optimize_policy(const PosteriorDraws& draws, const PanelData& data, const RolloutConfig& cfg,
                                   const SearchSpace& space, UtilityKind kind, std::uint64_t seed);

struct AlphaPosterior {
  Eigen::MatrixXd samples;  // one optimized point per draw, alpha0 first
  std::vector<double> probs{0.05, 0.25, 0.5, 0.75, 0.95};
  Eigen::MatrixXd quantiles;  // probs.size() x (q + 1)
};

/// Runs the policy search separately against each posterior draw.
AlphaPosterior posterior_of_alpha(const PosteriorDraws& draws, const PanelData& data, const RolloutConfig& cfg,
                                  const SearchSpace& space, UtilityKind kind, std::uint64_t seed);

}  // namespace netalloc
