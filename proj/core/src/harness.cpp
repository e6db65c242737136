#include "netalloc/harness.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "netalloc/errors.hpp"
#include "netalloc/io.hpp"

namespace netalloc {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!ok.count(key)) throw ConfigError("config: unknown key '" + (section.empty() ? key : section + "." + key) + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

void take_path(const json& j, const char* key, fs::path& target, const fs::path& base_dir) {
  if (!j.contains(key)) return;
  fs::path p = j.at(key).get<std::string>();
  target = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
}

}  // namespace

RunConfig RunConfig::study_defaults() {
  RunConfig c;
  c.model.n_iter = 2000;
  c.model.burn_in = 500;
  c.search.n_sequential = 20;
  return c;
}

RunConfig RunConfig::parse(const std::string& text, const RunConfig& base, const fs::path& base_dir) {
  RunConfig c = base;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    only_keys(j, "", {"seed", "jobs", "data", "model", "policy", "search", "rollout", "study"});
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    if (j.contains("data")) {
      const json& d = j.at("data");
      only_keys(d, "data", {"zones", "adjacency", "observations", "posterior", "latent", "policy"});
      take_path(d, "zones", c.data.zones, base_dir);
      take_path(d, "adjacency", c.data.adjacency, base_dir);
      take_path(d, "observations", c.data.observations, base_dir);
      take_path(d, "posterior", c.data.posterior, base_dir);
      take_path(d, "latent", c.data.latent, base_dir);
      take_path(d, "policy", c.data.policy, base_dir);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      only_keys(m, "model", {"n_iter", "burn_in", "coef_variance", "var_shape", "var_rate", "initial_state_variance"});
      take(m, "n_iter", c.model.n_iter);
      take(m, "burn_in", c.model.burn_in);
      take(m, "coef_variance", c.model.prior.coef_variance);
      take(m, "var_shape", c.model.prior.var_shape);
      take(m, "var_rate", c.model.prior.var_rate);
      take(m, "initial_state_variance", c.model.prior.initial_state_variance);
    }
    if (j.contains("policy")) {
      const json& p = j.at("policy");
      only_keys(p, "policy", {"utility_kind", "factors", "budget", "zero_floor"});
      if (p.contains("utility_kind")) c.policy.kind = parse_utility_kind(p.at("utility_kind").get<std::string>());
      if (p.contains("factors")) {
        c.policy.factors.clear();
        for (const auto& f : p.at("factors")) c.policy.factors.push_back(FactorSpec::parse(f.get<std::string>()));
      }
      take(p, "budget", c.policy.budget);
      if (p.contains("zero_floor")) {
        if (p.at("zero_floor").is_null()) c.policy.zero_floor.reset();
        else c.policy.zero_floor = p.at("zero_floor").get<double>();
      }
    }
    if (j.contains("search")) {
      const json& s = j.at("search");
      only_keys(s, "search", {"n_initial", "n_sequential", "n_candidates", "n_polish", "alpha_bound", "alpha0_max"});
      take(s, "n_initial", c.search.n_initial);
      take(s, "n_sequential", c.search.n_sequential);
      take(s, "n_candidates", c.search.n_candidates);
      take(s, "n_polish", c.search.n_polish);
      take(s, "alpha_bound", c.search.alpha_bound);
      take(s, "alpha0_max", c.search.alpha0_max);
    }
    if (j.contains("rollout")) {
      const json& r = j.at("rollout");
      only_keys(r, "rollout", {"horizon", "n_rollouts"});
      take(r, "horizon", c.rollout.horizon);
      take(r, "n_rollouts", c.rollout.n_rollouts);
    }
    if (j.contains("study")) {
      const json& s = j.at("study");
      only_keys(s, "study", {"replicates", "scenario", "budgets", "eval_rollouts"});
      take(s, "replicates", c.study.replicates);
      take(s, "scenario", c.study.scenario);
      take(s, "budgets", c.study.budgets);
      take(s, "eval_rollouts", c.study.eval_rollouts);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), base, path.parent_path());
}

void RunConfig::validate() const {
  if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
  model.prior.validate();
  if (model.burn_in < 0 || model.n_iter <= model.burn_in)
    throw ConfigError("config: model.n_iter must exceed model.burn_in >= 0");
  if (!(policy.budget >= 0.0 && policy.budget <= 1.0)) throw ConfigError("config: policy.budget must lie in [0, 1]");
  if (policy.zero_floor && !(*policy.zero_floor >= 0.0 && *policy.zero_floor < 1.0))
    throw ConfigError("config: policy.zero_floor must lie in [0, 1)");
  if (rollout.horizon < 1 || rollout.n_rollouts < 1) throw ConfigError("config: rollout sizes must be >= 1");
  if (study.replicates < 1 || study.eval_rollouts < 1) throw ConfigError("config: study sizes must be >= 1");
  if (study.budgets.empty()) throw ConfigError("config: study.budgets must not be empty");
  for (double b : study.budgets)
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("config: study budgets must lie in [0, 1]");
  ScenarioSpec::from_name(study.scenario);
  SearchSpace probe = search;
  probe.q = std::max<Index>(probe.q, 1);
  if (probe.n_initial < 3 || probe.n_sequential < 0 || probe.n_candidates < 1 || probe.n_polish < 0 ||
      !(probe.alpha_bound > 0.0) || !(probe.alpha0_max > 0.0))
    throw ConfigError("config: invalid search settings");
}

std::vector<FactorSpec> RunConfig::resolved_factors(Index covariate_count) const {
  std::vector<FactorSpec> out = policy.factors;
  if (out.empty()) {
    for (Index k = 0; k < covariate_count; ++k) out.push_back({FactorKind::covariate, k});
    out.push_back({FactorKind::logit_rate, 0});
    out.push_back({FactorKind::neighbor_logit_rate, 0});
    out.push_back({FactorKind::rate_gradient, 0});
  }
  for (const auto& f : out)
    if (f.kind == FactorKind::covariate && f.covariate >= covariate_count)
      throw ConfigError("risk factor '" + f.name() + "' references a missing covariate");
  return out;
}

RolloutConfig RunConfig::rollout_config(Index covariate_count) const {
  RolloutConfig r;
  r.horizon = rollout.horizon;
  r.n_rollouts = rollout.n_rollouts;
  r.budget = policy.budget;
  r.factors = resolved_factors(covariate_count);
  r.zero_floor = policy.zero_floor;
  r.seed = derive_seed(seed, 0x7011);
  r.jobs = jobs;
  return r;
}

SearchSpace RunConfig::search_space(Index covariate_count) const {
  SearchSpace s = search;
  s.q = static_cast<Index>(resolved_factors(covariate_count).size());
  s.validate();
  return s;
}

namespace {

PanelData load_configured_panel(const RunConfig& cfg) {
  if (cfg.data.zones.empty() || cfg.data.adjacency.empty() || cfg.data.observations.empty())
    throw ConfigError("config: data.zones, data.adjacency and data.observations are required");
  return io::load_panel(cfg.data.zones, cfg.data.adjacency, cfg.data.observations);
}

PosteriorDraws load_configured_draws(const RunConfig& cfg, const PanelData& data) {
  if (cfg.data.posterior.empty()) throw ConfigError("config: data.posterior is required");
  PosteriorDraws draws = io::read_draws(cfg.data.posterior);
  if (draws.draws.empty()) throw DataError(cfg.data.posterior.string() + ": no draws");
  if (draws.draws.front().params.covariate_count() != data.covariate_count())
    throw DataError(cfg.data.posterior.string() + ": covariate count does not match the zones file");
  fs::path latent = cfg.data.latent;
  if (latent.empty()) latent = cfg.data.posterior.parent_path() / "latent.csv";
  if (fs::exists(latent)) io::read_latent(latent, draws, data);
  return draws;
}

}  // namespace

std::vector<fs::path> run_simulate(const std::string& scenario, const fs::path& out, std::uint64_t seed,
                                   int replicates) {
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  const ScenarioSpec spec = ScenarioSpec::from_name(scenario);
  std::vector<fs::path> written;
  for (int r = 0; r < replicates; ++r) {
    fs::path dir = out;
    std::uint64_t s = seed;
    if (replicates > 1) {
      char name[32];
      std::snprintf(name, sizeof(name), "replicate_%03d", r + 1);
      dir = out / name;
      s = derive_seed(seed, static_cast<std::uint64_t>(r));
    }
    const SimulatedPanel panel = simulate_panel(spec, s);
    io::write_panel(dir, panel.data);
    for (const char* f : {"zones.csv", "adjacency.csv", "observations.csv"}) written.push_back(dir / f);
  }
  return written;
}

std::vector<ParameterSummary> run_fit(const RunConfig& cfg, const fs::path& out) {
  const PanelData data = load_configured_panel(cfg);
  const PosteriorDraws draws = gibbs_fit(data, cfg.model.prior, cfg.model.n_iter, cfg.model.burn_in, cfg.seed);
  const std::vector<ParameterSummary> summary = posterior_summary(draws);
  io::write_draws(out / "posterior.csv", out / "posterior.json", draws);
  io::write_latent(out / "latent.csv", draws, data);
  io::write_summary(out / "summary.csv", summary);
  return summary;
}

PolicySearchResult run_optimize(const RunConfig& cfg, const fs::path& out, int per_draw) {
  const PanelData data = load_configured_panel(cfg);
  const PosteriorDraws draws = load_configured_draws(cfg, data);
  const RolloutConfig rcfg = cfg.rollout_config(data.covariate_count());
  const SearchSpace space = cfg.search_space(data.covariate_count());
  PolicySearchResult result = optimize_policy(draws, data, rcfg, space, cfg.policy.kind, derive_seed(cfg.seed, 0x0b7));
  io::write_policy(out / "policy.json", {result.policy, cfg.policy.budget, rcfg.factors});
  io::write_trace(out / "trace.csv", result.search.trace);
  if (per_draw > 0) {
    if (per_draw > draws.n_kept()) throw ConfigError("--per-draw exceeds the number of posterior draws");
    const PosteriorDraws thinned = thin_draws(draws, per_draw, derive_seed(cfg.seed, 0x7417));
    const AlphaPosterior post =
        posterior_of_alpha(thinned, data, rcfg, space, cfg.policy.kind, derive_seed(cfg.seed, 0xa1fa));
    io::write_alpha_posterior(out / "alpha_posterior.csv", out / "alpha_quantiles.csv", post);
  }
  return result;
}

RecommendReport run_recommend(const RunConfig& cfg, const fs::path& out, std::optional<BaselinePolicy> baseline,
                              std::optional<int> year) {
  const PanelData data = load_configured_panel(cfg);
  const Index last = data.logit_prevalence.cols() - 1;
  const Index t = year ? static_cast<Index>(*year - data.first_year) : last;
  if (t < 0 || t > last) throw ConfigError("recommend: year outside the observed range");
  const Eigen::VectorXd current = data.logit_prevalence.col(t);
  const Eigen::VectorXd previous = t > 0 ? Eigen::VectorXd(data.logit_prevalence.col(t - 1)) : current;

  json report;
  Allocation alloc;
  Eigen::VectorXd scores;
  PolicyParams params;
  double budget = cfg.policy.budget;
  if (baseline) {
    alloc = *baseline == BaselinePolicy::highest_rate ? baseline_highest_rate(current, data.graph, budget)
                                                      : baseline_even(data.graph, budget);
    report["policy"] = to_string(*baseline);
  } else {
    if (cfg.data.policy.empty()) throw ConfigError("config: data.policy is required unless a baseline is chosen");
    const io::PolicyFile pf = io::read_policy(cfg.data.policy);
    params = pf.params;
    budget = pf.budget;
    const std::vector<FactorSpec> factors = pf.factors.empty() ? cfg.resolved_factors(data.covariate_count()) : pf.factors;
    if (static_cast<Index>(factors.size()) != params.alpha.size())
      throw ConfigError("recommend: policy has " + std::to_string(params.alpha.size()) + " weights but " +
                        std::to_string(factors.size()) + " risk factors are configured");
    const RiskFactors rf = build_risk_factors(factors, data.graph, data.covariates, current, previous);
    scores = priority_scores(rf, params.alpha);
    std::optional<ZeroFloor> floor;
    if (cfg.policy.zero_floor) floor = ZeroFloor{*cfg.policy.zero_floor, inv_logit(current)};
    alloc = allocate(scores, params, data.graph, budget, floor);
    report["policy"] = "utility_" + to_string(params.kind);
    report["kkt_residual"] = alloc.kkt_residual;
    report["budget_multiplier"] = alloc.budget_multiplier;
  }

  RecommendReport r;
  r.coverage = alloc.coverage;
  r.budget_used = alloc.budget_used(data.graph);
  r.budget_binding = budget - r.budget_used <= 1e-9;
  for (const auto& [i, j] : data.graph.edges()) {
    const double d = r.coverage(i) - r.coverage(j);
    r.neighbor_penalty += d * d;
  }
  if (!baseline) r.global_utility = global_utility(r.coverage, scores, params.alpha0, data.graph, params.kind);

  int at_zero = 0, at_one = 0;
  for (Index l = 0; l < r.coverage.size(); ++l) {
    at_zero += r.coverage(l) <= 0.0;
    at_one += r.coverage(l) >= 1.0;
  }
  report["year"] = data.first_year + static_cast<int>(t) + 1;
  report["budget"] = budget;
  report["budget_used"] = r.budget_used;
  report["budget_binding"] = r.budget_binding;
  report["zones_at_zero"] = at_zero;
  report["zones_at_one"] = at_one;
  report["zones_interior"] = static_cast<int>(r.coverage.size()) - at_zero - at_one;
  report["neighbor_penalty"] = r.neighbor_penalty;
  if (!baseline) report["global_utility"] = r.global_utility;

  io::write_allocation(out / "allocation.csv", data.graph, r.coverage);
  io::write_text(out / "allocation.json", report.dump(2) + "\n");
  return r;
}

ReplicateResult run_study_replicate(const RunConfig& cfg, int replicate, int rollout_jobs) {
  const auto r = static_cast<std::uint64_t>(replicate);
  const ScenarioSpec spec = ScenarioSpec::from_name(cfg.study.scenario);
  const SimulatedPanel panel = simulate_panel(spec, derive_seed(cfg.seed, 0x100000 + r));
  const PosteriorDraws draws =
      gibbs_fit(panel.data, cfg.model.prior, cfg.model.n_iter, cfg.model.burn_in, derive_seed(cfg.seed, 0x200000 + r));

  ReplicateResult out;
  out.replicate = replicate;
  const Index p = panel.data.covariate_count();
  const SearchSpace space = cfg.search_space(p);
  for (std::size_t b = 0; b < cfg.study.budgets.size(); ++b) {
    const std::uint64_t tag = (r << 8) | b;
    RolloutConfig rcfg = cfg.rollout_config(p);
    rcfg.budget = cfg.study.budgets[b];
    rcfg.jobs = rollout_jobs;
    rcfg.seed = derive_seed(cfg.seed, 0x300000 + tag);

    StudyStanza st;
    st.budget = rcfg.budget;
    st.linear_policy =
        optimize_policy(draws, panel.data, rcfg, space, UtilityKind::linear, derive_seed(cfg.seed, 0x400000 + tag)).policy;
    st.quadratic_policy =
        optimize_policy(draws, panel.data, rcfg, space, UtilityKind::quadratic, derive_seed(cfg.seed, 0x500000 + tag))
            .policy;

    RolloutConfig ecfg = rcfg;
    ecfg.n_rollouts = cfg.study.eval_rollouts;
    const RolloutEngine truth = RolloutEngine::from_truth(panel, ecfg);
    const std::uint64_t eval_seed = derive_seed(cfg.seed, 0x600000 + tag);
    st.linear = truth.estimate(st.linear_policy, derive_seed(eval_seed, 0));
    st.quadratic = truth.estimate(st.quadratic_policy, derive_seed(eval_seed, 1));
    st.highest_rate = truth.estimate(BaselinePolicy::highest_rate, derive_seed(eval_seed, 2));
    st.even = truth.estimate(BaselinePolicy::even, derive_seed(eval_seed, 3));
    out.stanzas.push_back(std::move(st));
  }
  return out;
}

namespace {

void write_study_files(const fs::path& out, const std::vector<ReplicateResult>& done) {
  using io::format_double;
  std::string losses = "replicate,C,L_l,L_q,L_hr,L_ev,se_l,se_q,se_hr,se_ev\n";
  std::string improve = "replicate,policy,baseline,C,improvement\n";
  std::string policies = "replicate,C,utility_kind,alpha0,alpha\n";
  for (const auto& rep : done) {
    const std::string id = std::to_string(rep.replicate + 1);
    for (const auto& st : rep.stanzas) {
      const std::string c = format_double(st.budget);
      losses += id + "," + c + "," + format_double(st.linear.mean) + "," + format_double(st.quadratic.mean) + "," +
                format_double(st.highest_rate.mean) + "," + format_double(st.even.mean) + "," +
                format_double(st.linear.std_error) + "," + format_double(st.quadratic.std_error) + "," +
                format_double(st.highest_rate.std_error) + "," + format_double(st.even.std_error) + "\n";
      const std::pair<const char*, const LossEstimate*> pols[] = {{"linear", &st.linear}, {"quadratic", &st.quadratic}};
      const std::pair<const char*, const LossEstimate*> bases[] = {{"highest_rate", &st.highest_rate},
                                                                   {"even", &st.even}};
      for (const auto& [pname, pl] : pols)
        for (const auto& [bname, bl] : bases)
          improve += id + "," + pname + "," + bname + "," + c + "," + format_double(improvement(*bl, *pl)) + "\n";
      for (const PolicyParams* pp : {&st.linear_policy, &st.quadratic_policy}) {
        std::string alpha;
        for (Index k = 0; k < pp->alpha.size(); ++k) alpha += (k ? " " : "") + format_double(pp->alpha(k));
        policies += id + "," + c + "," + to_string(pp->kind) + "," + format_double(pp->alpha0) + "," + alpha + "\n";
      }
    }
  }
  io::write_text(out / "losses.csv", losses);
  io::write_text(out / "improvement.csv", improve);
  io::write_text(out / "policies.csv", policies);
}

}  // namespace

std::vector<ReplicateResult> run_study(const RunConfig& cfg, const fs::path& out,
                                       const std::function<void(const ReplicateResult&)>& on_replicate) {
  cfg.validate();
  const int total = cfg.study.replicates;
  const int workers = std::min(cfg.jobs, total);
  std::vector<std::optional<ReplicateResult>> slots(static_cast<std::size_t>(total));
  std::mutex mu;
  auto finish = [&](ReplicateResult res) {
    std::lock_guard<std::mutex> lock(mu);
    const int idx = res.replicate;
    slots[static_cast<std::size_t>(idx)] = std::move(res);
    std::vector<ReplicateResult> done;
    for (const auto& s : slots)
      if (s) done.push_back(*s);
    write_study_files(out, done);
    if (on_replicate) on_replicate(*slots[static_cast<std::size_t>(idx)]);
  };

  if (workers <= 1) {
    for (int r = 0; r < total; ++r) finish(run_study_replicate(cfg, r, cfg.jobs));
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int r = next++; r < total; r = next++) finish(run_study_replicate(cfg, r, 1));
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<ReplicateResult> results;
  for (auto& s : slots) results.push_back(std::move(*s));
  return results;
}

}  // namespace netalloc
