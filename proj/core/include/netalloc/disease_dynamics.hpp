#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "netalloc/random.hpp"
#include "netalloc/spatial_graph.hpp"

namespace netalloc {

/// Coefficients of the latent autoregressive process
///
///   eta_t = W_t eta_{t-1} + c0 + b0 a + sum_k beta1_k X_k + sum_k beta2_k (X_k o a) + eps_t
///
/// where W_t has diagonal (1 + c1) + b1 a_i and neighbor entries (c2 + b2 a_i) / m_i,
/// eps_t ~ MVN(0, sigma_s2 (M - rho G)^{-1}) and observations are eta plus
/// Normal(0, sigma_e2) noise.
struct DynamicsParams {
  double c0 = 0.0;
  double b0 = 0.0;
  double c1 = 0.0;
  double b1 = 0.0;
  double c2 = 0.0;
  double b2 = 0.0;
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta2;
  double sigma_e2 = 1.0;
  double sigma_s2 = 1.0;
  double rho = 0.5;

  Index covariate_count() const { return beta1.size(); }
  /// Own-lag multiplier 1 + c1.
  double own_lag() const { return 1.0 + c1; }

  /// Throws std::domain_error unless variances are positive, rho is in
  /// (0, 1) and both beta vectors have length p.
  void validate(Index p) const;
};

/// Observed panel: logit prevalence for years 0..T and coverage for 1..T.
struct PanelData {
  ZoneGraph graph;
  Eigen::MatrixXd covariates;  // n x p
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd logit_prevalence;  // n x (T + 1)
  Eigen::MatrixXd allocations;       // n x T, column t-1 holds year t
  int first_year = 0;

  Index zones() const { return graph.size(); }
  Index transitions() const { return allocations.cols(); }
  Index covariate_count() const { return covariates.cols(); }

  /// Shapes, finiteness and allocation range; throws DataError.
  void validate() const;
};

/// W_t as a sparse matrix.
SparseMatrix propagator(const ZoneGraph& graph, const DynamicsParams& params,
                        const Eigen::VectorXd& allocation);

/// W_t eta without materializing W_t.
Eigen::VectorXd apply_propagator(const ZoneGraph& graph, const DynamicsParams& params,
                                 const Eigen::VectorXd& allocation, const Eigen::VectorXd& eta);

/// Allocation- and covariate-driven offset c0 + b0 a + d0 a^2 + X beta1 + (X o a) beta2.
/// `quadratic_effect` (d0) is only used by misspecified generators.
Eigen::VectorXd latent_offset(const DynamicsParams& params, const Eigen::VectorXd& allocation,
                              const Eigen::MatrixXd& covariates, double quadratic_effect = 0.0);

/// One transition with an explicit innovation vector.
Eigen::VectorXd step_latent(const ZoneGraph& graph, const DynamicsParams& params,
                            const Eigen::VectorXd& eta_prev, const Eigen::VectorXd& allocation,
                            const Eigen::MatrixXd& covariates, const Eigen::VectorXd& noise,
                            double quadratic_effect = 0.0);

/// One transition with the innovation drawn from `innovations`.
Eigen::VectorXd step_latent(const ZoneGraph& graph, const DynamicsParams& params,
                            const Eigen::VectorXd& eta_prev, const Eigen::VectorXd& allocation,
                            const Eigen::MatrixXd& covariates, const CarPrecision& innovations,
                            Rng& rng, double quadratic_effect = 0.0);

Eigen::VectorXd step_measure(const Eigen::VectorXd& eta, const Eigen::VectorXd& noise);
Eigen::VectorXd step_measure(const Eigen::VectorXd& eta, double sigma_e2, Rng& rng);

double inv_logit(double x);
double logit(double p);
Eigen::VectorXd inv_logit(const Eigen::VectorXd& x);

enum class ScenarioKind { correct_spec, quadratic_misspec, custom };

/// Synthetic data generator. Defaults reproduce the 10 x 10 lattice study.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::correct_spec;
  int rows = 10;
  int cols = 10;
  int years = 5;
  DynamicsParams truth;           // sigma_e2 / sigma_s2 may be 0 here to disable noise
  double quadratic_effect = 0.0;  // d0, absent from the fitted model
  double initial_sd = 0.5;        // eta_0 ~ MVN(0, initial_sd^2 (M - initial_rho G)^{-1})
  double initial_rho = 0.9;
  double allocation_slope = 0.1;  // A_lt ~ N(slope * t, allocation_sd^2) truncated to [0, 1]
  double allocation_sd = 0.05;
  double covariate_range = 2.0;   // Cor(X_l, X_j) = exp(-d_lj / range)
  /// Replaces the covariate Gaussian process when set (n x p).
  std::optional<Eigen::MatrixXd> covariates;

  static ScenarioSpec correct_spec();
  static ScenarioSpec quadratic_misspec();
  /// "correct", "correct_spec", "quadratic_misspec" or "misspec".
  static ScenarioSpec from_name(const std::string& name);
  std::string name() const;
};

/// Panel together with the latent trajectory that generated it.
struct SimulatedPanel {
  PanelData data;
  Eigen::MatrixXd latent;  // n x (T + 1)
  ScenarioSpec spec;
};

SimulatedPanel simulate_panel(const ScenarioSpec& spec, std::uint64_t seed);
/// Same, on a caller-supplied graph (needs coordinates or spec.covariates).
SimulatedPanel simulate_panel(const ScenarioSpec& spec, const ZoneGraph& graph, std::uint64_t seed);

}  // namespace netalloc
