// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netalloc/allocation_policy.hpp"
#include "netalloc/bayes_inference.hpp"
#include "netalloc/harness.hpp"
#include "netalloc/policy_search.hpp"
#include "netalloc/rollout_value.hpp"
#include "netalloc/surrogate.hpp"

namespace fs = std::filesystem;
using namespace netalloc;

namespace {

struct Options {
  int jobs = 1;
  int study_replicates = 20;
  int misspec_replicates = 20;
  int recovery_replicates = 10;
  int bowl_seeds = 10;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

void note(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double median(std::vector<double> v) { return sample_quantile(std::move(v), 0.5); }

// ---- 1 & 2: simulation study -------------------------------------------------

struct StudyNumbers {
  std::vector<double> lin_vs_ev, quad_vs_ev, lin_vs_hr, quad_vs_hr;
  int quad_at_least_linear = 0;
};

StudyNumbers run_desk_study(const std::string& scenario, int replicates, int jobs) {
  RunConfig cfg = RunConfig::study_defaults();
  cfg.study.scenario = scenario;
  cfg.study.budgets = {0.5};
  cfg.study.replicates = replicates;
  cfg.policy.budget = 0.5;
  cfg.seed = scenario == "correct_spec" ? 2024 : 4048;
  cfg.jobs = jobs;
  StudyNumbers s;
  const fs::path out = fs::temp_directory_path() / ("netalloc_acceptance_study_" + scenario);
  run_study(cfg, out, [&](const ReplicateResult& rep) {
    const StudyStanza& st = rep.stanzas.front();
    s.lin_vs_ev.push_back(improvement(st.even, st.linear));
    s.quad_vs_ev.push_back(improvement(st.even, st.quadratic));
    s.lin_vs_hr.push_back(improvement(st.highest_rate, st.linear));
    s.quad_vs_hr.push_back(improvement(st.highest_rate, st.quadratic));
    s.quad_at_least_linear += st.quadratic.mean <= st.linear.mean;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "replicate %2d  L_l=%.5f L_q=%.5f L_hr=%.5f L_ev=%.5f", rep.replicate + 1,
                  st.linear.mean, st.quadratic.mean, st.highest_rate.mean, st.even.mean);
    note(buf);
  });
  fs::remove_all(out);
  return s;
}

Outcome criterion_study(const Options& o) {
  const StudyNumbers s = run_desk_study("correct_spec", o.study_replicates, o.jobs);
  const double le = median(s.lin_vs_ev), qe = median(s.quad_vs_ev), lh = median(s.lin_vs_hr), qh = median(s.quad_vs_hr);
  const bool pass = le > 0.0 && qe > 0.0 && lh >= -0.01 && qh >= -0.01;
  return {pass, "median improvement vs Even: linear " + fmt("%.4f", le) + ", quad " + fmt("%.4f", qe) +
                    "; vs Highest_rate: linear " + fmt("%.4f", lh) + ", quad " + fmt("%.4f", qh) +
                    " (need >0 and >=-0.01)"};
}

Outcome criterion_misspec(const Options& o) {
  const StudyNumbers s = run_desk_study("quadratic_misspec", o.misspec_replicates, o.jobs);
  const double qe = median(s.quad_vs_ev), le = median(s.lin_vs_ev);
  const double share = static_cast<double>(s.quad_at_least_linear) / static_cast<double>(s.quad_vs_ev.size());
  const bool pass = qe > 0.0 && share >= 0.6;
  return {pass, "median quad vs Even " + fmt("%.4f", qe) + " (linear " + fmt("%.4f", le) + "); Quad <= Linear loss in " +
                    fmt("%.0f", 100 * share) + "% of replicates (need >= 60%)"};
}

// ---- 3: parameter recovery ---------------------------------------------------

Outcome criterion_recovery(const Options& o) {
  const ScenarioSpec spec = ScenarioSpec::correct_spec();
  const std::vector<std::pair<std::string, double>> truth{
      {"c0", 0.2}, {"b0", -0.7}, {"own_lag", 0.9}, {"b1", -0.1}, {"c2", 0.1},
      {"b2", -0.1}, {"beta1_1", 0.12}, {"beta2_1", -0.1}, {"rho", 0.9}};
  int covered = 0, total = 0;
  for (int r = 0; r < o.recovery_replicates; ++r) {
    const SimulatedPanel sim = simulate_panel(spec, derive_seed(777, static_cast<std::uint64_t>(r)));
    const PosteriorDraws post = gibbs_fit(sim.data, {}, 5000, 2000, derive_seed(778, static_cast<std::uint64_t>(r)));
    const auto rows = posterior_summary(post);
    std::string missed;
    for (const auto& [name, value] : truth) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const ParameterSummary& s) { return s.name == name; });
      if (it == rows.end()) throw std::logic_error("summary lacks " + name);
      const bool in = it->lower <= value && value <= it->upper;
      covered += in;
      ++total;
      if (!in) missed += " " + name;
    }
    note("replicate " + std::to_string(r + 1) + " rho acceptance " + fmt("%.2f", post.acceptance_rate_rho) +
         (missed.empty() ? "; all covered" : "; missed:" + missed));
  }
  const double rate = static_cast<double>(covered) / total;
  return {rate >= 0.8, "coverage " + std::to_string(covered) + "/" + std::to_string(total) + " = " +
                           fmt("%.3f", rate) + " (need >= 0.80)"};
}

// ---- 4: allocation oracle ----------------------------------------------------

double brute_force_max(const Eigen::VectorXd& s, double alpha0, const ZoneGraph& g, double budget, UtilityKind kind) {
  const Index n = g.size();
  const Eigen::VectorXd w = g.population_weights();
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Eigen::VectorXd a(n);
    for (Index l = 0; l < n; ++l) a(l) = 0.05 * idx[static_cast<std::size_t>(l)];
    if (w.dot(a) <= budget + 1e-12) best = std::max(best, global_utility(a, s, alpha0, g, kind));
    Index l = 0;
    while (l < n && ++idx[static_cast<std::size_t>(l)] > 20) idx[static_cast<std::size_t>(l++)] = 0;
    if (l == n) break;
  }
  return best;
}

// a_l = clip(1 - lambda w_l / (2 p_l), 0, 1) with lambda found by bisection.
Eigen::VectorXd water_filling(const Eigen::VectorXd& p, const Eigen::VectorXd& w, double budget) {
  auto fill = [&](double lambda) {
    return (1.0 - lambda * w.array() / (2.0 * p.array())).cwiseMax(0.0).cwiseMin(1.0).matrix().eval();
  };
  if (w.dot(fill(0.0)) <= budget) return fill(0.0);
  double lo = 0.0, hi = 1.0;
  while (w.dot(fill(hi)) > budget) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (w.dot(fill(mid)) > budget ? lo : hi) = mid;
  }
  return fill(0.5 * (lo + hi));
}

Outcome criterion_allocation(const Options&) {
  Rng rng = make_rng(404);
  std::uniform_real_distribution<double> u(0.02, 0.98), pop(0.5, 3.0);
  int worse = 0, configs = 0;
  double worst_gap = 0.0;
  for (auto kind : {UtilityKind::linear, UtilityKind::quadratic}) {
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + trial % 2;
      std::vector<std::string> ids;
      std::vector<double> pops;
      for (int i = 0; i < n; ++i) {
        ids.push_back("z" + std::to_string(i));
        pops.push_back(pop(rng));
      }
      std::vector<std::pair<Index, Index>> edges{{0, 1}};
      if (n == 3) edges.insert(edges.end(), {{1, 2}, {0, 2}});
      const ZoneGraph g(ids, pops, edges);
      Eigen::VectorXd s(n);
      for (Index l = 0; l < n; ++l) s(l) = u(rng);
      PolicyParams pp;
      pp.alpha0 = trial % 5 == 0 ? 0.0 : 2.0 * u(rng);
      pp.alpha = Eigen::VectorXd::Ones(1);
      pp.kind = kind;
      const double budget = u(rng);
      const Allocation a = allocate(s, pp, g, budget);
      const double gap = brute_force_max(s, pp.alpha0, g, budget, kind) - global_utility(a.coverage, s, pp.alpha0, g, kind);
      worst_gap = std::max(worst_gap, gap);
      worse += gap > 1e-6;
      ++configs;
    }
  }
  double worst_wf = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 30;
    const ZoneGraph g = build_grid_graph(1, n);
    std::vector<double> pops(static_cast<std::size_t>(n), 1.0);
    if (trial % 2)
      for (auto& v : pops) v = pop(rng);
    std::vector<std::string> ids(g.zone_ids());
    std::vector<std::pair<Index, Index>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    const ZoneGraph h(ids, pops, edges);
    Eigen::VectorXd p(n);
    for (Index l = 0; l < n; ++l) p(l) = u(rng);
    PolicyParams pp;
    pp.alpha = Eigen::VectorXd::Ones(1);
    pp.kind = UtilityKind::quadratic;
    const double budget = u(rng);
    const Eigen::VectorXd a = allocate(p, pp, h, budget).coverage;
    worst_wf = std::max(worst_wf, (a - water_filling(p, h.population_weights(), budget)).cwiseAbs().maxCoeff());
  }
  return {worse == 0 && worst_wf <= 1e-8,
          std::to_string(configs - worse) + "/" + std::to_string(configs) + " configs within 1e-6 of grid search (worst gap " +
              fmt("%.2e", worst_gap) + "); water-filling max deviation " + fmt("%.2e", worst_wf) + " (need <= 1e-8)"};
}

// ---- 5: utility axioms -------------------------------------------------------

Outcome criterion_axioms(const Options&) {
  Rng rng = make_rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int failures = 0, checks = 0;
  const double h = 1e-5;
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng) * (1.0 - 2 * h), p = 0.001 + 0.998 * u(rng), q = 0.001 + 0.998 * u(rng);
    for (auto kind : {UtilityKind::linear, UtilityKind::quadratic}) {
      // 1: no resource, no utility
      failures += local_utility(0.0, p, kind) != 0.0;
      // 2: increasing in a on [0, 1)
      failures += !(local_utility(a + h, p, kind) > local_utility(a, p, kind));
      // 3: increasing in p for a > 0
      if (a > 0.0 && p != q) failures += !((local_utility(a, std::max(p, q), kind) > local_utility(a, std::min(p, q), kind)));
      checks += 3;
    }
    // 4: diminishing marginal utility (quadratic only)
    const double a2 = h + u(rng) * (1.0 - 3 * h);
    const double second = local_utility(a2 + h, p, UtilityKind::quadratic) - 2 * local_utility(a2, p, UtilityKind::quadratic) +
                          local_utility(a2 - h, p, UtilityKind::quadratic);
    failures += second > 1e-12;
    ++checks;
  }
  return {failures == 0, std::to_string(failures) + " failures in " + std::to_string(checks) + " checks over 10^4 (a, p) pairs"};
}

// ---- 6: GMRF -----------------------------------------------------------------

Outcome criterion_gmrf(const Options&) {
  bool spd = true;
  std::string detail;
  const std::vector<ZoneGraph> graphs{build_grid_graph(10, 10), build_grid_graph(1, 7), build_grid_graph(23, 23)};
  for (const ZoneGraph& g : graphs)
    for (double rho : {0.1, 0.5, 0.9, 0.999}) {
      try {
        const CarPrecision q(g, rho, 0.01);
        spd = spd && std::isfinite(q.log_determinant());
      } catch (const std::exception&) {
        spd = false;
      }
    }
  bool moments = true;
  Rng rng = make_rng(606);
  for (double rho : {0.1, 0.5, 0.9, 0.999}) {
    const ZoneGraph& g = graphs[0];
    const CarPrecision q(g, rho, 0.01);
    const int draws = 4000;
    double sum = 0.0;
    for (int k = 0; k < draws; ++k) sum += q.quadratic_form(q.sample(rng));
    const double n = static_cast<double>(g.size());
    const double z = (sum / draws - n) / std::sqrt(2.0 * n / draws);
    moments = moments && std::abs(z) <= 3.0;
    detail += " rho=" + fmt("%g", rho) + ": z=" + fmt("%+.2f", z);
  }
  return {spd && moments, std::string(spd ? "SPD for all rho on 3 graphs" : "NOT SPD") + ";" + detail + " (need |z| <= 3)"};
}

// ---- 7: Bayesian optimization ------------------------------------------------

Outcome criterion_bowl(const Options& o) {
  SearchSpace space;
  space.q = 4;
  space.n_initial = 100;
  space.n_sequential = 30;
  const Eigen::VectorXd lo = space.lower(), hi = space.upper();
  int hits = 0;
  for (int seed = 1; seed <= o.bowl_seeds; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 0xb0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd opt(5);
    for (Index j = 0; j < 5; ++j) opt(j) = lo(j) + (0.15 + 0.7 * u(rng)) * (hi(j) - lo(j));
    const auto bowl = [&](const Eigen::VectorXd& x, int) {
      return Evaluation{((x - opt).array() / (hi - lo).array()).square().sum(), 0.0};
    };
    const SearchResult r = minimize_expected_improvement(bowl, space, static_cast<std::uint64_t>(seed));
    const double dist = (r.best_point - opt).norm();
    hits += dist <= 0.05;
    note("seed " + std::to_string(seed) + ": distance to minimum " + fmt("%.4f", dist));
  }
  Rng rng = make_rng(707);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::exponential_distribution<double> expo(1.0);
  int negative = 0;
  for (int i = 0; i < 10000; ++i) negative += expected_improvement(normal(rng), i % 7 ? expo(rng) : 0.0, normal(rng)) < 0.0;
  return {hits >= 9 && negative == 0, std::to_string(hits) + "/" + std::to_string(o.bowl_seeds) +
                                          " seeds within 0.05 (need >= 9); negative EI values: " + std::to_string(negative)};
}

// ---- 8: deterministic rollouts -----------------------------------------------

Outcome criterion_rollout(const Options&) {
  const ZoneGraph g = build_grid_graph(1, 2);
  PanelData data{g, Eigen::MatrixXd::Zero(2, 1), {"x1"}, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1), 0};
  DynamicsParams p = ScenarioSpec::correct_spec().truth;
  p.sigma_e2 = p.sigma_s2 = 0.0;
  PosteriorDraws draws;
  draws.draws.push_back({p, Eigen::MatrixXd::Zero(2, 2)});
  RolloutConfig c;
  c.horizon = 1;
  c.n_rollouts = 5;
  c.factors = {FactorSpec::parse("logit_rate")};
  PolicyParams pol;
  pol.alpha = Eigen::VectorXd::Ones(1);
  c.budget = 1.0;
  const double full = estimate_loss(pol, draws, data, c).mean;
  c.budget = 0.0;
  const double none = estimate_loss(pol, draws, data, c).mean;
  const bool pass = std::abs(full - 0.37754) <= 1e-5 && std::abs(none - 0.54983) <= 1e-5;
  return {pass, "C=1: " + fmt("%.6f", full) + " (0.37754), C=0: " + fmt("%.6f", none) + " (0.54983), tol 1e-5"};
}

// ---- 9: improvement arithmetic -----------------------------------------------

Outcome criterion_improvement(const Options&) {
  const double a = improvement(0.140, 0.135), b = improvement(0.149, 0.136);
  const bool pass = std::abs(a - 0.036) <= 5e-4 && std::abs(b - 0.087) <= 5e-4;
  return {pass, "improvement(0.140, 0.135) = " + fmt("%.4f", a) + ", improvement(0.149, 0.136) = " + fmt("%.4f", b)};
}

// ---- 10: CLI determinism -----------------------------------------------------

#ifdef NETALLOC_CLI
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion_cli(const Options&) {
  const fs::path root = fs::temp_directory_path() / "netalloc_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"data": {"zones": "data/zones.csv", "adjacency": "data/adjacency.csv",
  "observations": "data/observations.csv", "posterior": "RUN/fit/posterior.csv", "policy": "RUN/opt/policy.json"},
  "model": {"n_iter": 300, "burn_in": 100},
  "search": {"n_initial": 8, "n_sequential": 3, "n_candidates": 200},
  "rollout": {"n_rollouts": 10, "horizon": 3},
  "study": {"replicates": 2, "budgets": [0.2, 0.5], "eval_rollouts": 30}})";
  }
  const std::string cli = NETALLOC_CLI;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  bool ok = run("simulate --scenario correct --seed 5 --out " + (root / "data").string());
  for (const char* tag : {"a", "b"}) {
    std::string text = slurp(root / "config.json");
    for (std::size_t at; (at = text.find("RUN")) != std::string::npos;) text.replace(at, 3, std::string("run_") + tag);
    std::ofstream(root / (std::string("config_") + tag + ".json")) << text;
    const std::string cfg = (root / (std::string("config_") + tag + ".json")).string();
    const fs::path base = root / (std::string("run_") + tag);
    ok = ok && run("simulate --scenario quadratic_misspec --seed 9 --replicates 2 --out " + (base / "sim").string());
    ok = ok && run("fit --config " + cfg + " --seed 3 --out " + (base / "fit").string());
    ok = ok && run("optimize --config " + cfg + " --seed 3 --per-draw 2 --out " + (base / "opt").string());
    ok = ok && run("recommend --config " + cfg + " --out " + (base / "rec").string());
    ok = ok && run("recommend --config " + cfg + " --policy highest_rate --out " + (base / "rec_hr").string());
    ok = ok && run("study --config " + cfg + " --seed 4 --jobs 2 --out " + (base / "study").string());
  }
  if (!ok) return {false, "a CLI command failed"};
  int files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "run_a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "run_a");
    ++files;
    if (!fs::exists(root / "run_b" / rel) || slurp(entry.path()) != slurp(root / "run_b" / rel)) {
      ++differing;
      note("differs: " + rel.string());
    }
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0,
          std::to_string(files - differing) + "/" + std::to_string(files) + " output files byte-identical across reruns"};
}
#endif

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netalloc acceptance suite"};
  Options o;
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--jobs", o.jobs, "Replicate workers for the simulation study")->check(CLI::PositiveNumber);
  app.add_option("--study-replicates", o.study_replicates, "Replicates for criterion 1")->check(CLI::PositiveNumber);
  app.add_option("--misspec-replicates", o.misspec_replicates, "Replicates for criterion 2")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> criteria{
      {"simulation study (correct spec, C=0.5)", criterion_study},
      {"misspecification robustness", criterion_misspec},
      {"parameter recovery", criterion_recovery},
      {"allocation solver oracle", criterion_allocation},
      {"utility axioms", criterion_axioms},
      {"GMRF correctness", criterion_gmrf},
      {"Bayesian optimization sanity", criterion_bowl},
      {"deterministic rollouts", criterion_rollout},
      {"improvement arithmetic", criterion_improvement},
#ifdef NETALLOC_CLI
      {"CLI determinism", criterion_cli},
#else
      {"CLI determinism", [](const Options&) { return Outcome{false, "CLI not built"}; }},
#endif
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    std::printf("[criterion %d] %s\n", id, criteria[i].first.c_str());
    std::fflush(stdout);
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second(o);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %d %s: %s [%.0fs]\n", r.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), r.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += !r.pass;
  }
  return failed == 0 ? 0 : 1;
}
