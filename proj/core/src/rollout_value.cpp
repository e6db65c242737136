#include "netalloc/rollout_value.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "netalloc/errors.hpp"

namespace netalloc {

std::string FactorSpec::name() const {
  switch (kind) {
    case FactorKind::covariate: return "x" + std::to_string(covariate + 1);
    case FactorKind::logit_rate: return "logit_rate";
    case FactorKind::neighbor_logit_rate: return "neighbor_logit_rate";
    case FactorKind::rate_gradient: return "rate_gradient";
  }
  return "";
}

FactorSpec FactorSpec::parse(const std::string& text) {
  if (text == "logit_rate") return {FactorKind::logit_rate, 0};
  if (text == "neighbor_logit_rate") return {FactorKind::neighbor_logit_rate, 0};
  if (text == "rate_gradient") return {FactorKind::rate_gradient, 0};
  if (text.size() > 1 && text[0] == 'x') {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(text.substr(1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == text.size() - 1 && k >= 1) return {FactorKind::covariate, k - 1};
  }
  throw ConfigError("unknown risk factor '" + text + "'");
}

RiskFactors build_risk_factors(const std::vector<FactorSpec>& spec, const ZoneGraph& graph,
                               const Eigen::MatrixXd& covariates, const Eigen::VectorXd& current,
                               const Eigen::VectorXd& previous) {
  const Index n = graph.size();
  RiskFactors out;
  out.values.resize(n, static_cast<Index>(spec.size()));
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const auto col = static_cast<Index>(k);
    const FactorSpec& f = spec[k];
    out.names.push_back(f.name());
    switch (f.kind) {
      case FactorKind::covariate:
        if (f.covariate >= covariates.cols())
          throw ConfigError("risk factor '" + f.name() + "' references a missing covariate");
        out.values.col(col) = covariates.col(f.covariate);
        break;
      case FactorKind::logit_rate: out.values.col(col) = current; break;
      case FactorKind::neighbor_logit_rate: out.values.col(col) = graph.neighbor_mean(current); break;
      case FactorKind::rate_gradient: out.values.col(col) = current - previous; break;
    }
  }
  return out;
}

void RolloutConfig::validate() const {
  if (horizon < 1) throw ConfigError("rollout horizon must be >= 1");
  if (n_rollouts < 1) throw ConfigError("rollout count must be >= 1");
  if (!(budget >= 0.0 && budget <= 1.0)) throw ConfigError("budget must lie in [0, 1]");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

std::string to_string(BaselinePolicy policy) {
  return policy == BaselinePolicy::highest_rate ? "highest_rate" : "even";
}

RolloutEngine::RolloutEngine(ZoneGraph graph, Eigen::MatrixXd covariates, std::vector<RolloutStart> starts,
                             RolloutConfig config)
    : graph_(std::move(graph)), covariates_(std::move(covariates)), starts_(std::move(starts)),
      config_(std::move(config)) {
  config_.validate();
  if (starts_.empty()) throw std::invalid_argument("rollout engine needs at least one posterior draw");
  const Index n = graph_.size();
  if (covariates_.rows() != n) throw std::invalid_argument("rollout engine: covariate rows mismatch");
  for (const FactorSpec& f : config_.factors)
    if (f.kind == FactorKind::covariate && f.covariate >= covariates_.cols())
      throw ConfigError("risk factor '" + f.name() + "' references a missing covariate");
  innovations_.reserve(starts_.size());
  for (const RolloutStart& s : starts_) {
    if (s.eta_current.size() != n || s.eta_previous.size() != n)
      throw std::invalid_argument("rollout engine: starting state has wrong length");
    if (s.params.sigma_s2 < 0.0 || s.params.sigma_e2 < 0.0)
      throw std::domain_error("rollout engine: negative variance");
    if (s.params.sigma_s2 > 0.0) innovations_.emplace_back(std::in_place, graph_, s.params.rho, s.params.sigma_s2);
    else innovations_.emplace_back(std::nullopt);
  }
}

RolloutEngine RolloutEngine::from_posterior(const PosteriorDraws& draws, const PanelData& data,
                                            const RolloutConfig& config) {
  if (draws.draws.empty()) throw std::invalid_argument("estimate_loss: no posterior draws");
  const std::size_t total = draws.draws.size();
  const std::size_t used = std::min(total, static_cast<std::size_t>(std::max(config.n_rollouts, 1)));
  std::vector<RolloutStart> starts;
  starts.reserve(used);
  for (std::size_t i = 0; i < used; ++i) {
    const PosteriorDraw& d = draws.draws[i * total / used];
    RolloutStart s;
    s.params = d.params;
    const bool has_latent = d.latent.rows() == data.zones() && d.latent.cols() >= 1;
    const Eigen::MatrixXd& field = has_latent ? d.latent : data.logit_prevalence;
    const Index last = field.cols() - 1;
    s.eta_current = field.col(last);
    s.eta_previous = last >= 1 ? Eigen::VectorXd(field.col(last - 1)) : s.eta_current;
    starts.push_back(std::move(s));
  }
  return RolloutEngine(data.graph, data.covariates, std::move(starts), config);
}

RolloutEngine RolloutEngine::from_truth(const SimulatedPanel& panel, const RolloutConfig& config) {
  RolloutStart s;
  s.params = panel.spec.truth;
  s.quadratic_effect = panel.spec.quadratic_effect;
  const Index last = panel.latent.cols() - 1;
  s.eta_current = panel.latent.col(last);
  s.eta_previous = last >= 1 ? Eigen::VectorXd(panel.latent.col(last - 1)) : s.eta_current;
  return RolloutEngine(panel.data.graph, panel.data.covariates, {std::move(s)}, config);
}

double RolloutEngine::rollout(const RolloutPolicy& policy, Index r, std::uint64_t seed) const {
  const auto which = static_cast<std::size_t>(r % static_cast<Index>(starts_.size()));
  const RolloutStart& start = starts_[which];
  const std::optional<CarPrecision>& innov = innovations_[which];
  const Index n = graph_.size();
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));

  Eigen::VectorXd eta = start.eta_current;
  Eigen::VectorXd prev = start.eta_previous;
  double total = 0.0;
  for (int year = 0; year < config_.horizon; ++year) {
    Eigen::VectorXd a;
    if (const auto* params = std::get_if<PolicyParams>(&policy)) {
      const RiskFactors factors = build_risk_factors(config_.factors, graph_, covariates_, eta, prev);
      const Eigen::VectorXd scores = priority_scores(factors, params->alpha);
      std::optional<ZeroFloor> floor;
      if (config_.zero_floor) floor = ZeroFloor{*config_.zero_floor, inv_logit(eta)};
      a = allocate(scores, *params, graph_, config_.budget, floor).coverage;
    } else if (std::get<BaselinePolicy>(policy) == BaselinePolicy::highest_rate) {
      a = baseline_highest_rate(eta, graph_, config_.budget).coverage;
    } else {
      a = baseline_even(graph_, config_.budget).coverage;
    }
    const Eigen::VectorXd noise = innov ? innov->sample(rng) : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd next = step_latent(graph_, start.params, eta, a, covariates_, noise, start.quadratic_effect);
    const Eigen::VectorXd observed = step_measure(next, start.params.sigma_e2, rng);
    for (Index l = 0; l < n; ++l) total += inv_logit(observed(l));
    prev = std::move(eta);
    eta = std::move(next);
  }
  return total / static_cast<double>(n * config_.horizon);
}

LossEstimate RolloutEngine::estimate(const RolloutPolicy& policy) const { return estimate(policy, config_.seed); }

LossEstimate RolloutEngine::estimate(const RolloutPolicy& policy, std::uint64_t seed) const {
  if (const auto* params = std::get_if<PolicyParams>(&policy)) {
    if (params->alpha.size() != static_cast<Index>(config_.factors.size()))
      throw std::invalid_argument("policy weight count does not match the risk factor spec");
  }
  const int total = config_.n_rollouts;
  std::vector<double> values(static_cast<std::size_t>(total));
  const int jobs = std::min(config_.jobs, total);
  if (jobs <= 1) {
    for (int r = 0; r < total; ++r) values[static_cast<std::size_t>(r)] = rollout(policy, r, seed);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) {
      workers.emplace_back([&, j] {
        try {
          for (int r = j; r < total; r += jobs) values[static_cast<std::size_t>(r)] = rollout(policy, r, seed);
        } catch (...) {
          errors[static_cast<std::size_t>(j)] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  double sum = 0.0;
  for (double v : values) sum += v;
  LossEstimate out;
  out.n_rollouts = total;
  out.mean = sum / total;
  if (total == 1) {
    out.degenerate = true;
    out.std_error = 0.0;
  } else {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / (total - 1)) / std::sqrt(static_cast<double>(total));
  }
  return out;
}

LossEstimate estimate_loss(const PolicyParams& policy, const PosteriorDraws& draws, const PanelData& data,
                           const RolloutConfig& config) {
  return RolloutEngine::from_posterior(draws, data, config).estimate(policy);
}

LossEstimate estimate_loss_fixed_policy(BaselinePolicy policy, const PosteriorDraws& draws,
                                        const PanelData& data, const RolloutConfig& config) {
  return RolloutEngine::from_posterior(draws, data, config).estimate(policy);
}

double improvement(double baseline, double policy) {
  if (!(baseline > 0.0)) throw std::domain_error("improvement: baseline loss must be positive");
  return (baseline - policy) / baseline;
}

double improvement(const LossEstimate& baseline, const LossEstimate& policy) {
  return improvement(baseline.mean, policy.mean);
}

}  // namespace netalloc
