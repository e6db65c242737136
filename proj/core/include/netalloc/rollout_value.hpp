#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "netalloc/allocation_policy.hpp"
#include "netalloc/bayes_inference.hpp"
#include "netalloc/disease_dynamics.hpp"

namespace netalloc {

enum class FactorKind { covariate, logit_rate, neighbor_logit_rate, rate_gradient };

/// One risk-factor constructor. Text forms: "x<k>" (1-based covariate),
/// "logit_rate", "neighbor_logit_rate", "rate_gradient".
struct FactorSpec {
  FactorKind kind = FactorKind::logit_rate;
  Index covariate = 0;  // 0-based, only for FactorKind::covariate

  std::string name() const;
  static FactorSpec parse(const std::string& text);
  bool operator==(const FactorSpec&) const = default;
};

/// Builds the n x q factor matrix from the current and previous logit rates.
RiskFactors build_risk_factors(const std::vector<FactorSpec>& spec, const ZoneGraph& graph,
                               const Eigen::MatrixXd& covariates, const Eigen::VectorXd& current,
                               const Eigen::VectorXd& previous);

struct RolloutConfig {
  int horizon = 5;
  int n_rollouts = 200;
  double budget = 0.5;
  std::vector<FactorSpec> factors;
  std::optional<double> zero_floor;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct LossEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int n_rollouts = 0;
  /// Set when a single rollout makes the standard error undefined (reported as 0).
  bool degenerate = false;
};

enum class BaselinePolicy { highest_rate, even };
std::string to_string(BaselinePolicy policy);

using RolloutPolicy = std::variant<PolicyParams, BaselinePolicy>;

/// Dynamics and starting state for one simulated trajectory.
struct RolloutStart {
  DynamicsParams params;             // variances may be 0 to switch noise off
  double quadratic_effect = 0.0;     // d0, only for true misspecified generators
  Eigen::VectorXd eta_current;       // latent state at the last observed year
  Eigen::VectorXd eta_previous;      // one year earlier (rate gradient factor)
};

/// Monte Carlo evaluator of the mean future prevalence under a policy.
///
/// Rollout r uses start r mod (number of starts) and its own RNG substream,
/// so results do not depend on the number of worker threads.
class RolloutEngine {
 public:
  RolloutEngine(ZoneGraph graph, Eigen::MatrixXd covariates, std::vector<RolloutStart> starts,
                RolloutConfig config);

  /// One start per posterior draw, from the draw's final two latent slices
  /// (observed logits when the draw carries no latent field). When there are
  /// more draws than rollouts, an evenly spaced subset is used.
  static RolloutEngine from_posterior(const PosteriorDraws& draws, const PanelData& data,
                                      const RolloutConfig& config);
  /// Single start at the true generator and true latent state.
  static RolloutEngine from_truth(const SimulatedPanel& panel, const RolloutConfig& config);

  LossEstimate estimate(const RolloutPolicy& policy) const;
  LossEstimate estimate(const RolloutPolicy& policy, std::uint64_t seed) const;

  const RolloutConfig& config() const { return config_; }
  const ZoneGraph& graph() const { return graph_; }

  /// Mean prevalence of a single rollout (exposed for diagnostics).
  double rollout(const RolloutPolicy& policy, Index r, std::uint64_t seed) const;

 private:
  ZoneGraph graph_;
  Eigen::MatrixXd covariates_;
  std::vector<RolloutStart> starts_;
  std::vector<std::optional<CarPrecision>> innovations_;
  RolloutConfig config_;
};

LossEstimate estimate_loss(const PolicyParams& policy, const PosteriorDraws& draws, const PanelData& data,
                           const RolloutConfig& config);
LossEstimate estimate_loss_fixed_policy(BaselinePolicy policy, const PosteriorDraws& draws,
                                        const PanelData& data, const RolloutConfig& config);

/// (baseline - policy) / baseline.
double improvement(const LossEstimate& baseline, const LossEstimate& policy);
double improvement(double baseline, double policy);

}  // namespace netalloc
