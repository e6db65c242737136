#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netalloc/spatial_graph.hpp"

namespace netalloc {

enum class UtilityKind { linear, quadratic };

std::string to_string(UtilityKind kind);
/// "linear" or "quadratic"; anything else raises ConfigError.
UtilityKind parse_utility_kind(const std::string& text);

/// Risk factors f_{klt} for one decision epoch (n x q).
struct RiskFactors {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};

/// Priority weights alpha_1..alpha_q, spatial penalty alpha_0 and the local
/// utility shape.
struct PolicyParams {
  double alpha0 = 0.0;
  Eigen::VectorXd alpha;
  UtilityKind kind = UtilityKind::linear;

  void validate() const;
};

/// p_l = logistic(f_l . alpha).
Eigen::VectorXd priority_scores(const RiskFactors& factors, const Eigen::VectorXd& alpha);

/// Linear: a p.  Quadratic: p (1 - (a - 1)^2).
double local_utility(double a, double p, UtilityKind kind);

/// Sum of local utilities minus alpha0 times the squared neighbor differences,
/// each undirected pair counted once.
double global_utility(const Eigen::VectorXd& a, const Eigen::VectorXd& scores, double alpha0,
                      const ZoneGraph& graph, UtilityKind kind);

/// Zones whose current prevalence is below `threshold` are forced to zero.
struct ZeroFloor {
  double threshold = 0.01;
  Eigen::VectorXd prevalence;
};

enum class SolverPath { greedy, water_filling, projected_gradient, closed_form };

struct Allocation {
  Eigen::VectorXd coverage;
  double budget = 0.0;
  SolverPath path = SolverPath::closed_form;
  int iterations = 0;
  /// Largest violation of the KKT conditions at the returned point.
  double kkt_residual = 0.0;
  /// Lagrange multiplier of the budget constraint.
  double budget_multiplier = 0.0;

  /// sum a_l N_l / sum N_l.
  double budget_used(const ZoneGraph& graph) const;
};

struct AllocateOptions {
  int max_iterations = 100000;
  double step_tolerance = 1e-10;
};

/// Maximizes the global utility subject to 0 <= a <= 1 and
/// sum a_l N_l <= C sum N_l (and a_l = 0 under the optional zero floor).
///
/// The linear utility without penalty is solved by greedy fill and the
/// quadratic utility without penalty by exact water filling. With alpha0 > 0
/// the concave QP is solved by accelerated projected gradient with exact
/// projection onto the box-plus-budget set, followed by an active-set polish
/// that is accepted only if it satisfies the KKT conditions.
/// Throws NumericalError if the iteration cap is reached.
Allocation allocate(const Eigen::VectorXd& scores, const PolicyParams& params, const ZoneGraph& graph,
                    double budget, const std::optional<ZeroFloor>& zero_floor = std::nullopt,
                    const AllocateOptions& options = {});

/// Full coverage for the top-ranked zones by current rate (ties: lower index)
/// while the population-weighted budget allows; zero elsewhere.
Allocation baseline_highest_rate(const Eigen::VectorXd& current_rates, const ZoneGraph& graph,
                                 double budget);

/// Uniform coverage C.
Allocation baseline_even(const ZoneGraph& graph, double budget);

/// Euclidean projection onto {0 <= a <= upper, w'a <= budget}. Exposed for testing.
Eigen::VectorXd project_box_budget(const Eigen::VectorXd& y, const Eigen::VectorXd& upper,
                                   const Eigen::VectorXd& weights, double budget);

}  // namespace netalloc
