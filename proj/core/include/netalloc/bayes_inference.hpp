#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netalloc/disease_dynamics.hpp"

namespace netalloc {

/// Conjugate priors: Normal(0, coef_variance) on every regression coefficient
/// (c1 rather than 1 + c1), Inverse-Gamma(var_shape, var_rate) on both
/// variances, Uniform(0, 1) on rho, Normal(0, initial_state_variance) on eta_0.
struct PriorSpec {
  double coef_variance = 100.0;
  double var_shape = 0.1;
  double var_rate = 0.1;
  double initial_state_variance = 100.0;

  void validate() const;
};

struct PosteriorDraw {
  DynamicsParams params;
  Eigen::MatrixXd latent;  // n x (T + 1); may be empty when loaded without latents
};

struct PosteriorDraws {
  std::vector<PosteriorDraw> draws;
  int n_iter = 0;
  int burn_in = 0;
  double acceptance_rate_rho = 0.0;
  std::uint64_t seed = 0;
  /// Unnormalized log joint density after every sweep (burn-in included).
  std::vector<double> log_posterior_trace;

  Index n_kept() const { return static_cast<Index>(draws.size()); }
};

/// Gibbs sampler for the latent autoregressive CAR model. Each sweep updates
/// the regression block jointly, then sigma_e2 and sigma_s2, then rho by
/// adaptive random-walk Metropolis on the logit scale, then eta_0..eta_T one
/// time slice at a time. Draws after `burn_in` sweeps are retained.
/// Throws DataError if the panel has no transitions and NumericalError on a
/// non-finite state.
PosteriorDraws gibbs_fit(const PanelData& data, const PriorSpec& prior, int n_iter, int burn_in,
                         std::uint64_t seed);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
  bool excludes_zero = false;
};

/// Mean and equal-tailed 95% interval for every scalar parameter, plus the
/// derived own-lag multiplier 1 + c1.
std::vector<ParameterSummary> posterior_summary(const PosteriorDraws& draws);

/// Uniform subsample of k draws without replacement, kept in original order.
PosteriorDraws thin_draws(const PosteriorDraws& draws, Index k, std::uint64_t seed);

/// c0, b0, c1, b1, c2, b2, beta1_1..p, beta2_1..p, sigma_e2, sigma_s2, rho.
std::vector<std::string> parameter_names(Index p);
Eigen::VectorXd flatten_params(const DynamicsParams& params);
DynamicsParams unflatten_params(const Eigen::VectorXd& values, Index p);

/// Linear-interpolation sample quantile (prob in [0, 1]).
double sample_quantile(std::vector<double> values, double prob);

// Building blocks of the sampler, exposed for verification.

/// Regression design for one transition: columns
/// [1, a, eta_prev, a*eta_prev, nbr(eta_prev), a*nbr(eta_prev), X, X*a],
/// so that eta_t = D theta + eps with theta = pack_coefficients(params).
Eigen::MatrixXd transition_design(const ZoneGraph& graph, const Eigen::VectorXd& allocation,
                                  const Eigen::VectorXd& eta_prev, const Eigen::MatrixXd& covariates);

/// (c0, b0, 1 + c1, b1, c2, b2, beta1, beta2).
Eigen::VectorXd pack_coefficients(const DynamicsParams& params);
void unpack_coefficients(const Eigen::VectorXd& theta, DynamicsParams& params);

struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
};

/// Full conditional of the packed regression block given the latent field,
/// sigma_s2 and rho.
GaussianConditional coefficient_conditional(const PanelData& data, const Eigen::MatrixXd& latent,
                                            const DynamicsParams& params, const PriorSpec& prior);

/// Full conditional of eta_t given its neighbors in time and Y_t.
GaussianConditional latent_conditional(const PanelData& data, const Eigen::MatrixXd& latent,
                                       const DynamicsParams& params, const PriorSpec& prior, Index t);

struct InverseGammaConditional {
  double shape = 0.0;
  double rate = 0.0;

  /// rate / (shape - 1); infinite when shape <= 1.
  double mean() const;
};

/// Full conditional of sigma_e2 given the latent field.
InverseGammaConditional measurement_variance_conditional(const Eigen::MatrixXd& observed,
                                                         const Eigen::MatrixXd& latent, const PriorSpec& prior);

}  // namespace netalloc
