#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "netalloc/allocation_policy.hpp"
#include "netalloc/bayes_inference.hpp"
#include "netalloc/policy_search.hpp"
#include "netalloc/rollout_value.hpp"

namespace netalloc {

namespace fs = std::filesystem;

struct DataPaths {
  fs::path zones, adjacency, observations;
  fs::path posterior;  // draws CSV written by `fit`
  fs::path latent;     // optional latent CSV; defaults to latent.csv next to the posterior
  fs::path policy;     // policy JSON written by `optimize`
};

struct ModelSection {
  PriorSpec prior;
  int n_iter = 5000;
  int burn_in = 2000;
};

struct PolicySection {
  UtilityKind kind = UtilityKind::linear;
  /// Empty means: every covariate, then logit_rate, neighbor_logit_rate, rate_gradient.
  std::vector<FactorSpec> factors;
  double budget = 0.5;
  std::optional<double> zero_floor;
};

struct RolloutSection {
  int horizon = 5;
  int n_rollouts = 200;
};

struct StudySection {
  int replicates = 20;
  std::string scenario = "correct_spec";
  std::vector<double> budgets{0.5};
  int eval_rollouts = 1000;
};

/// Complete run configuration. JSON keys mirror the struct layout
/// (seed, jobs, data, model, policy, search, rollout, study); unknown keys
/// and type mismatches raise ConfigError.
struct RunConfig {
  DataPaths data;
  ModelSection model;
  PolicySection policy;
  SearchSpace search;  // q is filled in from the factor list
  RolloutSection rollout;
  StudySection study;
  std::uint64_t seed = 1;
  int jobs = 1;

  /// Desk-scale defaults for `study`: 2000/500 MCMC and 20 EI iterations.
  static RunConfig study_defaults();
  /// Overlays a JSON document on `base`. Relative data paths resolve against `base_dir`.
  static RunConfig parse(const std::string& json_text, const RunConfig& base, const fs::path& base_dir = {});
  static RunConfig load(const fs::path& path, const RunConfig& base);

  void validate() const;
  /// Factor list resolved against a covariate count.
  std::vector<FactorSpec> resolved_factors(Index covariate_count) const;
  RolloutConfig rollout_config(Index covariate_count) const;
  SearchSpace search_space(Index covariate_count) const;
};

// Commands. Each writes its files under `out` and returns what it wrote.

std::vector<fs::path> run_simulate(const std::string& scenario, const fs::path& out, std::uint64_t seed,
                                   int replicates = 1);

std::vector<ParameterSummary> run_fit(const RunConfig& cfg, const fs::path& out);

PolicySearchResult run_optimize(const RunConfig& cfg, const fs::path& out, int per_draw = 0);

struct RecommendReport {
  Eigen::VectorXd coverage;
  double global_utility = 0.0;
  double neighbor_penalty = 0.0;  // sum over edges of squared coverage differences
  double budget_used = 0.0;
  bool budget_binding = false;
};
/// Allocation for the year after `year` (latest observed when unset), from
/// the configured policy file or from a baseline.
RecommendReport run_recommend(const RunConfig& cfg, const fs::path& out, std::optional<BaselinePolicy> baseline = {},
                              std::optional<int> year = {});

struct StudyStanza {
  double budget = 0.0;
  LossEstimate linear, quadratic, highest_rate, even;
  PolicyParams linear_policy, quadratic_policy;
};
struct ReplicateResult {
  int replicate = 0;
  std::vector<StudyStanza> stanzas;
};

/// Simulate, fit, optimize both utilities and score all four policies under
/// the true generator, per replicate. Files are rewritten after every
/// finished replicate: losses.csv, improvement.csv, policies.csv.
std::vector<ReplicateResult> run_study(const RunConfig& cfg, const fs::path& out,
                                       const std::function<void(const ReplicateResult&)>& on_replicate = {});

/// Single study replicate (exposed so callers can drive replicates themselves).
ReplicateResult run_study_replicate(const RunConfig& cfg, int replicate, int rollout_jobs = 1);

}  // namespace netalloc
