#include "netalloc/disease_dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include "netalloc/errors.hpp"

namespace netalloc {

void DynamicsParams::validate(Index p) const {
  if (!(sigma_e2 > 0.0)) throw std::domain_error("sigma_e2 must be positive");
  if (!(sigma_s2 > 0.0)) throw std::domain_error("sigma_s2 must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("rho must lie in (0, 1)");
  if (beta1.size() != p || beta2.size() != p)
    throw std::domain_error("beta1/beta2 length must equal the covariate count");
}

void PanelData::validate() const {
  const Index n = graph.size();
  if (covariates.rows() != n) throw DataError("covariate matrix has wrong number of rows");
  if (static_cast<Index>(covariate_names.size()) != covariates.cols())
    throw DataError("covariate names do not match covariate columns");
  if (logit_prevalence.rows() != n || allocations.rows() != n)
    throw DataError("panel matrices must have one row per zone");
  if (logit_prevalence.cols() != allocations.cols() + 1)
    throw DataError("panel needs exactly one more prevalence year than allocation years");
  if (!logit_prevalence.allFinite()) throw DataError("non-finite logit prevalence in panel");
  if (!covariates.allFinite()) throw DataError("non-finite covariate in panel");
  if (allocations.size() > 0 && (allocations.minCoeff() < 0.0 || allocations.maxCoeff() > 1.0))
    throw DataError("allocation coverage outside [0, 1]");
}

namespace {

void check_allocation(const Eigen::VectorXd& a, Index n) {
  if (a.size() != n) throw std::invalid_argument("allocation has wrong length");
  if (n > 0 && (a.minCoeff() < 0.0 || a.maxCoeff() > 1.0))
    throw std::domain_error("allocation entries must lie in [0, 1]");
}

}  // namespace

SparseMatrix propagator(const ZoneGraph& graph, const DynamicsParams& params,
                        const Eigen::VectorXd& allocation) {
  const Index n = graph.size();
  check_allocation(allocation, n);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * graph.edge_count() + n);
  for (Index i = 0; i < n; ++i) {
    const double ai = allocation(i);
    t.emplace_back(i, i, params.own_lag() + params.b1 * ai);
    const double w = (params.c2 + params.b2 * ai) / static_cast<double>(graph.degree(i));
    for (Index j : graph.neighbors(i)) t.emplace_back(i, j, w);
  }
  SparseMatrix w(n, n);
  w.setFromTriplets(t.begin(), t.end());
  return w;
}

Eigen::VectorXd apply_propagator(const ZoneGraph& graph, const DynamicsParams& params,
                                 const Eigen::VectorXd& allocation, const Eigen::VectorXd& eta) {
  const Index n = graph.size();
  if (eta.size() != n || allocation.size() != n)
    throw std::invalid_argument("apply_propagator: dimension mismatch");
  const Eigen::VectorXd nb = graph.neighbor_mean(eta);
  Eigen::VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    const double ai = allocation(i);
    out(i) = (params.own_lag() + params.b1 * ai) * eta(i) + (params.c2 + params.b2 * ai) * nb(i);
  }
  return out;
}

Eigen::VectorXd latent_offset(const DynamicsParams& params, const Eigen::VectorXd& allocation,
                              const Eigen::MatrixXd& covariates, double quadratic_effect) {
  const Index n = allocation.size();
  const Index p = covariates.cols();
  if (covariates.rows() != n) throw std::invalid_argument("covariates have wrong row count");
  if (params.beta1.size() != p || params.beta2.size() != p)
    throw std::invalid_argument("beta length does not match covariate count");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(n, params.c0) + params.b0 * allocation +
                        quadratic_effect * allocation.cwiseProduct(allocation);
  if (p > 0) {
    out += covariates * params.beta1;
    out += (covariates * params.beta2).cwiseProduct(allocation);
  }
  return out;
}

Eigen::VectorXd step_latent(const ZoneGraph& graph, const DynamicsParams& params,
                            const Eigen::VectorXd& eta_prev, const Eigen::VectorXd& allocation,
                            const Eigen::MatrixXd& covariates, const Eigen::VectorXd& noise,
                            double quadratic_effect) {
  const Index n = graph.size();
  if (eta_prev.size() != n || noise.size() != n) throw std::invalid_argument("step_latent: dimension mismatch");
  check_allocation(allocation, n);
  return apply_propagator(graph, params, allocation, eta_prev) +
         latent_offset(params, allocation, covariates, quadratic_effect) + noise;
}

Eigen::VectorXd step_latent(const ZoneGraph& graph, const DynamicsParams& params,
                            const Eigen::VectorXd& eta_prev, const Eigen::VectorXd& allocation,
                            const Eigen::MatrixXd& covariates, const CarPrecision& innovations,
                            Rng& rng, double quadratic_effect) {
  return step_latent(graph, params, eta_prev, allocation, covariates, innovations.sample(rng),
                     quadratic_effect);
}

Eigen::VectorXd step_measure(const Eigen::VectorXd& eta, const Eigen::VectorXd& noise) {
  if (eta.size() != noise.size()) throw std::invalid_argument("step_measure: dimension mismatch");
  return eta + noise;
}

Eigen::VectorXd step_measure(const Eigen::VectorXd& eta, double sigma_e2, Rng& rng) {
  if (sigma_e2 < 0.0) throw std::domain_error("sigma_e2 must be non-negative");
  if (sigma_e2 == 0.0) return eta;
  return eta + std::sqrt(sigma_e2) * standard_normal_vector(rng, eta.size());
}

double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: probability must lie in (0, 1)");
  return std::log(p / (1.0 - p));
}

Eigen::VectorXd inv_logit(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double v) { return inv_logit(v); });
}

ScenarioSpec ScenarioSpec::correct_spec() {
  ScenarioSpec s;
  s.kind = ScenarioKind::correct_spec;
  DynamicsParams& t = s.truth;
  t.c0 = 0.2;
  t.b0 = -0.7;
  t.c1 = -0.1;  // own lag 0.9
  t.b1 = -0.1;
  t.c2 = 0.1;
  t.b2 = -0.1;
  t.beta1 = Eigen::VectorXd::Constant(1, 0.12);
  t.beta2 = Eigen::VectorXd::Constant(1, -0.1);
  t.sigma_e2 = 0.01 * 0.01;
  t.sigma_s2 = 0.1 * 0.1;
  t.rho = 0.9;
  return s;
}

ScenarioSpec ScenarioSpec::quadratic_misspec() {
  ScenarioSpec s = correct_spec();
  s.kind = ScenarioKind::quadratic_misspec;
  s.truth.b0 = -0.8;
  s.quadratic_effect = 0.2;
  return s;
}

ScenarioSpec ScenarioSpec::from_name(const std::string& name) {
  if (name == "correct" || name == "correct_spec") return correct_spec();
  if (name == "quadratic_misspec" || name == "misspec") return quadratic_misspec();
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string ScenarioSpec::name() const {
  switch (kind) {
    case ScenarioKind::correct_spec: return "correct_spec";
    case ScenarioKind::quadratic_misspec: return "quadratic_misspec";
    case ScenarioKind::custom: return "custom";
  }
  return "custom";
}

namespace {

Eigen::MatrixXd sample_covariates(const ZoneGraph& graph, Index p, double range, Rng& rng) {
  if (p == 0) return Eigen::MatrixXd(graph.size(), 0);
  if (!graph.coordinates())
    throw DataError("covariate simulation needs zone coordinates or explicit covariates");
  const Eigen::MatrixX2d& xy = *graph.coordinates();
  const Index n = graph.size();
  Eigen::MatrixXd cov(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) cov(i, j) = std::exp(-(xy.row(i) - xy.row(j)).norm() / range);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariate correlation matrix not SPD");
  Eigen::MatrixXd x(n, p);
  for (Index k = 0; k < p; ++k) x.col(k) = llt.matrixL() * standard_normal_vector(rng, n);
  return x;
}

}  // namespace

SimulatedPanel simulate_panel(const ScenarioSpec& spec, std::uint64_t seed) {
  return simulate_panel(spec, build_grid_graph(spec.rows, spec.cols), seed);
}

SimulatedPanel simulate_panel(const ScenarioSpec& spec, const ZoneGraph& graph, std::uint64_t seed) {
  const DynamicsParams& truth = spec.truth;
  const Index n = graph.size();
  const Index p = truth.beta1.size();
  if (truth.beta2.size() != p) throw ConfigError("scenario beta1/beta2 length mismatch");
  if (spec.years < 1) throw ConfigError("scenario needs at least one simulated year");
  if (truth.sigma_e2 < 0.0 || truth.sigma_s2 < 0.0 || spec.initial_sd < 0.0 || spec.allocation_sd < 0.0)
    throw ConfigError("scenario noise scales must be non-negative");

  Rng rng = make_rng(seed, 0x5eed);

  Eigen::MatrixXd x;
  if (spec.covariates) {
    if (spec.covariates->rows() != n || spec.covariates->cols() != p)
      throw ConfigError("scenario covariates have the wrong shape");
    x = *spec.covariates;
  } else {
    x = sample_covariates(graph, p, spec.covariate_range, rng);
  }

  const int horizon = spec.years;
  Eigen::MatrixXd latent(n, horizon + 1);
  Eigen::MatrixXd observed(n, horizon + 1);
  Eigen::MatrixXd alloc(n, horizon);

  latent.col(0) = spec.initial_sd > 0.0
                      ? CarPrecision(graph, spec.initial_rho, spec.initial_sd * spec.initial_sd).sample(rng)
                      : Eigen::VectorXd::Zero(n);
  observed.col(0) = step_measure(latent.col(0), truth.sigma_e2, rng);

  std::optional<CarPrecision> innovations;
  if (truth.sigma_s2 > 0.0) innovations.emplace(graph, truth.rho, truth.sigma_s2);

  for (int t = 1; t <= horizon; ++t) {
    Eigen::VectorXd a(n);
    for (Index l = 0; l < n; ++l)
      a(l) = truncated_normal(rng, spec.allocation_slope * t, spec.allocation_sd, 0.0, 1.0);
    alloc.col(t - 1) = a;
    const Eigen::VectorXd noise = innovations ? innovations->sample(rng) : Eigen::VectorXd::Zero(n);
    latent.col(t) = step_latent(graph, truth, latent.col(t - 1), a, x, noise, spec.quadratic_effect);
    observed.col(t) = step_measure(latent.col(t), truth.sigma_e2, rng);
  }

  std::vector<std::string> names;
  for (Index k = 0; k < p; ++k) names.push_back("x" + std::to_string(k + 1));

  SimulatedPanel out{PanelData{graph, std::move(x), std::move(names), std::move(observed),
                               std::move(alloc), 0},
                     std::move(latent), spec};
  return out;
}

}  // namespace netalloc
