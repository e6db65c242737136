#include "netalloc/bayes_inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/SparseCholesky>

#include "netalloc/errors.hpp"

namespace netalloc {

void PriorSpec::validate() const {
  if (!(coef_variance > 0.0) || !(var_shape > 0.0) || !(var_rate > 0.0) || !(initial_state_variance > 0.0))
    throw ConfigError("prior hyperparameters must be positive");
}

std::vector<std::string> parameter_names(Index p) {
  std::vector<std::string> names{"c0", "b0", "c1", "b1", "c2", "b2"};
  for (Index k = 0; k < p; ++k) names.push_back("beta1_" + std::to_string(k + 1));
  for (Index k = 0; k < p; ++k) names.push_back("beta2_" + std::to_string(k + 1));
  names.insert(names.end(), {"sigma_e2", "sigma_s2", "rho"});
  return names;
}

Eigen::VectorXd flatten_params(const DynamicsParams& params) {
  const Index p = params.beta1.size();
  Eigen::VectorXd v(9 + 2 * p);
  v.head(6) << params.c0, params.b0, params.c1, params.b1, params.c2, params.b2;
  v.segment(6, p) = params.beta1;
  v.segment(6 + p, p) = params.beta2;
  v.tail(3) << params.sigma_e2, params.sigma_s2, params.rho;
  return v;
}

DynamicsParams unflatten_params(const Eigen::VectorXd& values, Index p) {
  if (values.size() != 9 + 2 * p) throw std::invalid_argument("unflatten_params: wrong length");
  DynamicsParams out;
  out.c0 = values(0);
  out.b0 = values(1);
  out.c1 = values(2);
  out.b1 = values(3);
  out.c2 = values(4);
  out.b2 = values(5);
  out.beta1 = values.segment(6, p);
  out.beta2 = values.segment(6 + p, p);
  out.sigma_e2 = values(6 + 2 * p);
  out.sigma_s2 = values(7 + 2 * p);
  out.rho = values(8 + 2 * p);
  return out;
}

Eigen::MatrixXd transition_design(const ZoneGraph& graph, const Eigen::VectorXd& allocation,
                                  const Eigen::VectorXd& eta_prev, const Eigen::MatrixXd& covariates) {
  const Index n = graph.size();
  const Index p = covariates.cols();
  const Eigen::VectorXd nb = graph.neighbor_mean(eta_prev);
  Eigen::MatrixXd d(n, 6 + 2 * p);
  d.col(0).setOnes();
  d.col(1) = allocation;
  d.col(2) = eta_prev;
  d.col(3) = allocation.cwiseProduct(eta_prev);
  d.col(4) = nb;
  d.col(5) = allocation.cwiseProduct(nb);
  for (Index k = 0; k < p; ++k) {
    d.col(6 + k) = covariates.col(k);
    d.col(6 + p + k) = covariates.col(k).cwiseProduct(allocation);
  }
  return d;
}

Eigen::VectorXd pack_coefficients(const DynamicsParams& params) {
  const Index p = params.beta1.size();
  Eigen::VectorXd theta(6 + 2 * p);
  theta.head(6) << params.c0, params.b0, params.own_lag(), params.b1, params.c2, params.b2;
  theta.segment(6, p) = params.beta1;
  theta.segment(6 + p, p) = params.beta2;
  return theta;
}

void unpack_coefficients(const Eigen::VectorXd& theta, DynamicsParams& params) {
  const Index p = (theta.size() - 6) / 2;
  params.c0 = theta(0);
  params.b0 = theta(1);
  params.c1 = theta(2) - 1.0;
  params.b1 = theta(3);
  params.c2 = theta(4);
  params.b2 = theta(5);
  params.beta1 = theta.segment(6, p);
  params.beta2 = theta.segment(6 + p, p);
}

namespace {

using SparseLlt = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

SparseMatrix car_structure(const ZoneGraph& graph, double rho) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * graph.edge_count() + graph.size());
  for (Index i = 0; i < graph.size(); ++i) {
    t.emplace_back(i, i, static_cast<double>(graph.degree(i)));
    for (Index j : graph.neighbors(i)) t.emplace_back(i, j, -rho);
  }
  SparseMatrix q(graph.size(), graph.size());
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

Eigen::VectorXd prior_mean(Index k) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(k);
  m(2) = 1.0;  // prior on c1 is centered at zero, so 1 + c1 centers at one
  return m;
}

// Innovation residuals eta_t - W_t eta_{t-1} - offset_t for t = 1..T (column t-1).
Eigen::MatrixXd innovations(const PanelData& data, const Eigen::MatrixXd& latent, const DynamicsParams& params) {
  const Index n = data.zones();
  const Index horizon = data.transitions();
  Eigen::MatrixXd r(n, horizon);
  for (Index t = 1; t <= horizon; ++t) {
    const Eigen::VectorXd a = data.allocations.col(t - 1);
    r.col(t - 1) = latent.col(t) - apply_propagator(data.graph, params, a, latent.col(t - 1)) -
                   latent_offset(params, a, data.covariates);
  }
  return r;
}

struct SparseConditional {
  SparseMatrix precision;
  Eigen::VectorXd linear;  // precision * mean
};

SparseConditional latent_conditional_sparse(const PanelData& data, const Eigen::MatrixXd& latent,
                                            const DynamicsParams& params, const PriorSpec& prior,
                                            const SparseMatrix& structure, Index t) {
  const Index n = data.zones();
  const Index horizon = data.transitions();
  SparseMatrix identity(n, n);
  identity.setIdentity();
  const SparseMatrix innov_prec = structure / params.sigma_s2;

  SparseConditional out;
  out.precision = identity / params.sigma_e2;
  out.linear = data.logit_prevalence.col(t) / params.sigma_e2;
  if (t == 0) {
    out.precision += identity / prior.initial_state_variance;
  } else {
    const Eigen::VectorXd a = data.allocations.col(t - 1);
    const Eigen::VectorXd mean = apply_propagator(data.graph, params, a, latent.col(t - 1)) +
                                 latent_offset(params, a, data.covariates);
    out.precision += innov_prec;
    out.linear += innov_prec * mean;
  }
  if (t < horizon) {
    const Eigen::VectorXd a = data.allocations.col(t);
    const SparseMatrix w = propagator(data.graph, params, a);
    const SparseMatrix wt = w.transpose();
    const SparseMatrix pw = innov_prec * w;
    out.precision += SparseMatrix(wt * pw);
    const Eigen::VectorXd target = latent.col(t + 1) - latent_offset(params, a, data.covariates);
    out.linear += wt * (innov_prec * target);
  }
  return out;
}

double sample_inverse_gamma(Rng& rng, double shape, double rate) {
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return 1.0 / gamma(rng);
}

double log_logit_jacobian(double rho) { return std::log(rho) + std::log1p(-rho); }

}  // namespace

GaussianConditional coefficient_conditional(const PanelData& data, const Eigen::MatrixXd& latent,
                                            const DynamicsParams& params, const PriorSpec& prior) {
  const Index horizon = data.transitions();
  const Index k = 6 + 2 * data.covariate_count();
  const SparseMatrix structure = car_structure(data.graph, params.rho);
  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(k, k) / prior.coef_variance;
  Eigen::VectorXd linear = prior_mean(k) / prior.coef_variance;
  for (Index t = 1; t <= horizon; ++t) {
    const Eigen::MatrixXd d =
        transition_design(data.graph, data.allocations.col(t - 1), latent.col(t - 1), data.covariates);
    const Eigen::MatrixXd qd = structure * d;
    precision.noalias() += d.transpose() * qd / params.sigma_s2;
    linear.noalias() += qd.transpose() * latent.col(t) / params.sigma_s2;
  }
  GaussianConditional out;
  out.mean = precision.llt().solve(linear);
  out.precision = std::move(precision);
  return out;
}

GaussianConditional latent_conditional(const PanelData& data, const Eigen::MatrixXd& latent,
                                       const DynamicsParams& params, const PriorSpec& prior, Index t) {
  const SparseConditional c =
      latent_conditional_sparse(data, latent, params, prior, car_structure(data.graph, params.rho), t);
  GaussianConditional out;
  out.precision = Eigen::MatrixXd(c.precision);
  out.mean = out.precision.llt().solve(c.linear);
  return out;
}

double InverseGammaConditional::mean() const {
  return shape > 1.0 ? rate / (shape - 1.0) : std::numeric_limits<double>::infinity();
}

InverseGammaConditional measurement_variance_conditional(const Eigen::MatrixXd& observed,
                                                         const Eigen::MatrixXd& latent, const PriorSpec& prior) {
  if (observed.rows() != latent.rows() || observed.cols() != latent.cols())
    throw std::invalid_argument("measurement_variance_conditional: shape mismatch");
  return {prior.var_shape + 0.5 * static_cast<double>(observed.size()),
          prior.var_rate + 0.5 * (observed - latent).squaredNorm()};
}

PosteriorDraws gibbs_fit(const PanelData& data, const PriorSpec& prior, int n_iter, int burn_in,
                         std::uint64_t seed) {
  data.validate();
  prior.validate();
  const Index n = data.zones();
  const Index horizon = data.transitions();
  const Index p = data.covariate_count();
  const Index k = 6 + 2 * p;
  if (horizon < 1) throw DataError("gibbs_fit: panel needs at least one transition (T >= 1)");
  if (!(n_iter > burn_in && burn_in >= 0)) throw ConfigError("gibbs_fit: need n_iter > burn_in >= 0");

  Rng rng = make_rng(seed, 0x61bb5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const Eigen::MatrixXd& y = data.logit_prevalence;
  const SparseMatrix adjacency = data.graph.adjacency();
  const Eigen::VectorXd degrees = data.graph.degrees();

  // Initial state.
  DynamicsParams params;
  params.beta1 = Eigen::VectorXd::Zero(p);
  params.beta2 = Eigen::VectorXd::Zero(p);
  {
    const Eigen::MatrixXd dy = y.rightCols(horizon) - y.leftCols(horizon);
    const double mean = dy.mean();
    const double var = dy.size() > 1 ? (dy.array() - mean).square().sum() / static_cast<double>(dy.size() - 1) : 0.0;
    const double v = var > 1e-8 ? var : 1e-2;
    params.sigma_e2 = v;
    params.sigma_s2 = v;
  }
  params.rho = 0.9;
  Eigen::MatrixXd latent = y;

  SparseMatrix structure = car_structure(data.graph, params.rho);
  double log_det = car_log_determinant(data.graph, params.rho);

  double log_step = std::log(0.5);
  int batch_accepted = 0;
  int batch_size = 0;
  int batches = 0;
  long kept_accepted = 0;
  long kept_proposals = 0;

  PosteriorDraws out;
  out.n_iter = n_iter;
  out.burn_in = burn_in;
  out.seed = seed;
  out.draws.reserve(static_cast<std::size_t>(n_iter - burn_in));
  out.log_posterior_trace.reserve(static_cast<std::size_t>(n_iter));

  const double n_obs = static_cast<double>(n * (horizon + 1));
  const double n_innov = static_cast<double>(n * horizon);
  const Eigen::VectorXd theta_prior = prior_mean(k);

  for (int iter = 0; iter < n_iter; ++iter) {
    // (i) regression block.
    {
      Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(k, k) / prior.coef_variance;
      Eigen::VectorXd linear = theta_prior / prior.coef_variance;
      for (Index t = 1; t <= horizon; ++t) {
        const Eigen::MatrixXd d =
            transition_design(data.graph, data.allocations.col(t - 1), latent.col(t - 1), data.covariates);
        const Eigen::MatrixXd qd = structure * d;
        precision.noalias() += d.transpose() * qd / params.sigma_s2;
        linear.noalias() += qd.transpose() * latent.col(t) / params.sigma_s2;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(precision);
      if (llt.info() != Eigen::Success)
        throw NumericalError("gibbs_fit: coefficient precision not SPD at iteration " + std::to_string(iter));
      Eigen::VectorXd z(k);
      for (Index j = 0; j < k; ++j) z(j) = normal(rng);
      const Eigen::VectorXd theta = llt.solve(linear) + llt.matrixU().solve(z);
      unpack_coefficients(theta, params);
    }

    // (ii) variances.
    {
      const InverseGammaConditional c = measurement_variance_conditional(y, latent, prior);
      params.sigma_e2 = sample_inverse_gamma(rng, c.shape, c.rate);
    }

    const Eigen::MatrixXd resid = innovations(data, latent, params);
    double ss_m = 0.0;
    double ss_g = 0.0;
    for (Index t = 0; t < horizon; ++t) {
      const Eigen::VectorXd r = resid.col(t);
      ss_m += r.cwiseProduct(r).dot(degrees);
      ss_g += r.dot(adjacency * r);
    }
    params.sigma_s2 = sample_inverse_gamma(rng, prior.var_shape + 0.5 * n_innov,
                                           prior.var_rate + 0.5 * (ss_m - params.rho * ss_g));

    // (iii) rho by random-walk Metropolis on logit(rho).
    {
      const auto log_target = [&](double rho, double ld) {
        return 0.5 * static_cast<double>(horizon) * ld - (ss_m - rho * ss_g) / (2.0 * params.sigma_s2) +
               log_logit_jacobian(rho);
      };
      const double proposal_logit = logit(params.rho) + std::exp(log_step) * normal(rng);
      const double proposal = inv_logit(proposal_logit);
      bool accepted = false;
      if (proposal > 0.0 && proposal < 1.0) {
        double proposal_ld = 0.0;
        bool ok = true;
        try {
          proposal_ld = car_log_determinant(data.graph, proposal);
        } catch (const NumericalError&) {
          ok = false;
        }
        if (ok) {
          const double log_ratio = log_target(proposal, proposal_ld) - log_target(params.rho, log_det);
          if (std::log(uniform(rng)) < log_ratio) {
            params.rho = proposal;
            log_det = proposal_ld;
            structure = car_structure(data.graph, params.rho);
            accepted = true;
          }
        }
      }
      if (iter < burn_in) {
        batch_accepted += accepted ? 1 : 0;
        if (++batch_size == 50) {
          ++batches;
          const double rate = batch_accepted / 50.0;
          const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batches)));
          log_step += rate > 0.44 ? delta : -delta;
          batch_accepted = 0;
          batch_size = 0;
        }
      } else {
        ++kept_proposals;
        kept_accepted += accepted ? 1 : 0;
      }
    }

    // (iv) latent slices.
    for (Index t = 0; t <= horizon; ++t) {
      const SparseConditional c = latent_conditional_sparse(data, latent, params, prior, structure, t);
      SparseLlt llt(c.precision);
      if (llt.info() != Eigen::Success)
        throw NumericalError("gibbs_fit: latent precision not SPD at iteration " + std::to_string(iter));
      Eigen::VectorXd z(n);
      for (Index j = 0; j < n; ++j) z(j) = normal(rng);
      const Eigen::VectorXd noise = llt.permutationPinv() * Eigen::VectorXd(llt.matrixU().solve(z));
      latent.col(t) = llt.solve(c.linear) + noise;
    }

    // Monitor: unnormalized log joint of data, latent field and parameters.
    const Eigen::MatrixXd r = innovations(data, latent, params);
    double quad = 0.0;
    for (Index t = 0; t < horizon; ++t) quad += r.col(t).dot(structure * r.col(t));
    const double lp = -0.5 * n_obs * std::log(params.sigma_e2) - 0.5 * (y - latent).squaredNorm() / params.sigma_e2 -
                      0.5 * n_innov * std::log(params.sigma_s2) + 0.5 * static_cast<double>(horizon) * log_det -
                      0.5 * quad / params.sigma_s2;
    if (!std::isfinite(lp) || !latent.allFinite())
      throw NumericalError("gibbs_fit: non-finite likelihood at iteration " + std::to_string(iter));
    out.log_posterior_trace.push_back(lp);

    if (iter >= burn_in) out.draws.push_back({params, latent});
  }

  out.acceptance_rate_rho =
      kept_proposals > 0 ? static_cast<double>(kept_accepted) / static_cast<double>(kept_proposals) : 0.0;
  return out;
}

double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("sample_quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<ParameterSummary> posterior_summary(const PosteriorDraws& draws) {
  if (draws.n_kept() < 2) throw std::invalid_argument("posterior_summary: need at least two draws");
  const Index p = draws.draws.front().params.covariate_count();
  std::vector<std::string> names = parameter_names(p);
  names.emplace_back("own_lag");
  const auto m = static_cast<std::size_t>(draws.n_kept());
  std::vector<std::vector<double>> columns(names.size(), std::vector<double>(m));
  for (std::size_t d = 0; d < m; ++d) {
    const DynamicsParams& params = draws.draws[d].params;
    const Eigen::VectorXd flat = flatten_params(params);
    for (Index j = 0; j < flat.size(); ++j) columns[static_cast<std::size_t>(j)][d] = flat(j);
    columns.back()[d] = params.own_lag();
  }
  std::vector<ParameterSummary> out;
  out.reserve(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    ParameterSummary s;
    s.name = names[j];
    s.mean = std::accumulate(columns[j].begin(), columns[j].end(), 0.0) / static_cast<double>(m);
    s.lower = sample_quantile(columns[j], 0.025);
    s.upper = sample_quantile(columns[j], 0.975);
    s.excludes_zero = s.lower > 0.0 || s.upper < 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

PosteriorDraws thin_draws(const PosteriorDraws& draws, Index k, std::uint64_t seed) {
  const Index m = draws.n_kept();
  if (k < 1 || k > m) throw std::invalid_argument("thin_draws: need 1 <= k <= n_kept");
  std::vector<Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng = make_rng(seed, 0x7417);
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, m - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  PosteriorDraws out;
  out.n_iter = draws.n_iter;
  out.burn_in = draws.burn_in;
  out.acceptance_rate_rho = draws.acceptance_rate_rho;
  out.seed = draws.seed;
  out.draws.reserve(idx.size());
  for (Index i : idx) out.draws.push_back(draws.draws[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace netalloc
