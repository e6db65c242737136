// netalloc command line front end: simulate, fit, optimize, recommend, study.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "netalloc/errors.hpp"
#include "netalloc/harness.hpp"
#include "netalloc/io.hpp"

namespace {

using namespace netalloc;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "Run configuration (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--jobs", c.jobs, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c, const RunConfig& base) {
  RunConfig cfg = c.config.empty() ? base : RunConfig::load(c.config, base);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<ParameterSummary>& rows) {
  std::printf("%-12s %12s %12s %12s  %s\n", "parameter", "mean", "lower_95", "upper_95", "excl_0");
  for (const auto& s : rows)
    std::printf("%-12s %12.5f %12.5f %12.5f  %s\n", s.name.c_str(), s.mean, s.lower, s.upper,
                s.excludes_zero ? "*" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal resource allocation: model fitting and policy search"};
  app.require_subcommand(1);

  Common sim_c, fit_c, opt_c, rec_c, study_c;
  std::string scenario = "correct_spec";
  int replicates = 1;
  auto* sim = app.add_subcommand("simulate", "Write synthetic zones/adjacency/observations files");
  add_common(sim, sim_c, false);
  sim->add_option("--scenario", scenario, "correct_spec | quadratic_misspec")->capture_default_str();
  sim->add_option("--replicates", replicates, "Number of panels")->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit", "Gibbs sampling of the latent autoregressive model");
  add_common(fit, fit_c, true);

  int per_draw = 0;
  auto* opt = app.add_subcommand("optimize", "Search the policy parameters minimizing the rollout loss");
  add_common(opt, opt_c, true);
  opt->add_option("--per-draw", per_draw, "Also optimize against k thinned posterior draws")->check(CLI::NonNegativeNumber);

  std::string policy_choice;
  std::optional<int> year;
  auto* rec = app.add_subcommand("recommend", "Allocation for the next year");
  add_common(rec, rec_c, true);
  rec->add_option("--policy", policy_choice, "highest_rate | even | path to a policy JSON");
  rec->add_option("--year", year, "Decision year (default: latest observed)");

  std::optional<int> study_reps;
  std::optional<std::string> study_scenario;
  auto* study = app.add_subcommand("study", "Simulation study against the Highest_rate and Even baselines");
  add_common(study, study_c, false);
  study->add_option("--replicates", study_reps, "Replicate count (overrides the config)")->check(CLI::PositiveNumber);
  study->add_option("--scenario", study_scenario, "correct_spec | quadratic_misspec");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      const std::uint64_t seed = sim_c.seed.value_or(1);
      const auto files = run_simulate(scenario, sim_c.out, seed, replicates);
      for (const auto& f : files) std::cout << f.string() << "\n";
    } else if (*fit) {
      const RunConfig cfg = resolve(fit_c, RunConfig{});
      print_summary(run_fit(cfg, fit_c.out));
    } else if (*opt) {
      const RunConfig cfg = resolve(opt_c, RunConfig{});
      const PolicySearchResult r = run_optimize(cfg, opt_c.out, per_draw);
      std::cout << "alpha0 " << io::format_double(r.policy.alpha0) << "\nalpha";
      for (Index k = 0; k < r.policy.alpha.size(); ++k) std::cout << " " << io::format_double(r.policy.alpha(k));
      std::cout << "\nloss " << io::format_double(r.search.best_loss) << "\n";
    } else if (*rec) {
      RunConfig cfg = resolve(rec_c, RunConfig{});
      std::optional<BaselinePolicy> baseline;
      if (policy_choice == "highest_rate") baseline = BaselinePolicy::highest_rate;
      else if (policy_choice == "even") baseline = BaselinePolicy::even;
      else if (!policy_choice.empty()) cfg.data.policy = policy_choice;
      const RecommendReport r = run_recommend(cfg, rec_c.out, baseline, year);
      std::cout << "budget_used " << io::format_double(r.budget_used) << "\nneighbor_penalty "
                << io::format_double(r.neighbor_penalty) << "\n";
    } else if (*study) {
      RunConfig cfg = resolve(study_c, RunConfig::study_defaults());
      if (study_reps) cfg.study.replicates = *study_reps;
      if (study_scenario) cfg.study.scenario = *study_scenario;
      cfg.validate();
      run_study(cfg, study_c.out, [](const ReplicateResult& rep) {
        for (const auto& st : rep.stanzas)
          std::printf("replicate %d C=%g  L_l=%.5f L_q=%.5f L_hr=%.5f L_ev=%.5f\n", rep.replicate + 1, st.budget,
                      st.linear.mean, st.quadratic.mean, st.highest_rate.mean, st.even.mean);
        std::fflush(stdout);
      });
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
