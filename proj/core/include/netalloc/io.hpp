#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netalloc/allocation_policy.hpp"
#include "netalloc/bayes_inference.hpp"
#include "netalloc/disease_dynamics.hpp"
#include "netalloc/policy_search.hpp"
#include "netalloc/rollout_value.hpp"

namespace netalloc::io {

namespace fs = std::filesystem;

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // 1-based source line of each row

  /// Column index of `name`; DataError naming the file if absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

/// Plain comma-separated file with a header row (no quoting). DataError on
/// missing files and ragged rows, with file/line context.
CsvTable read_csv(const fs::path& path);

/// Writes `text`, creating parent directories. DataError if unwritable.
void write_text(const fs::path& path, const std::string& text);

// Zones / adjacency / observations.
ZonesTable read_zones(const fs::path& path);
std::vector<std::pair<std::string, std::string>> read_adjacency(const fs::path& path);
void write_zones(const fs::path& path, const ZoneGraph& graph, const Eigen::MatrixXd& covariates,
                 const std::vector<std::string>& names);
void write_adjacency(const fs::path& path, const ZoneGraph& graph);

/// Joins the three files into a panel. Years must be consecutive with the
/// first year's coverage left blank.
PanelData load_panel(const fs::path& zones, const fs::path& adjacency, const fs::path& observations);
void write_observations(const fs::path& path, const PanelData& data);
/// zones.csv, adjacency.csv, observations.csv inside `dir`.
void write_panel(const fs::path& dir, const PanelData& data);

// Posterior draws.
void write_draws(const fs::path& csv, const fs::path& json_sidecar, const PosteriorDraws& draws);
/// Reads draws (parameters only); the covariate count is inferred from the header.
PosteriorDraws read_draws(const fs::path& csv);
/// Long format `draw,zone_id,year,eta`. Only the last `last_years` slices are
/// written (all when 0).
void write_latent(const fs::path& path, const PosteriorDraws& draws, const PanelData& data, int last_years = 2);
/// Attaches latent slices (ordered by year) to already loaded draws.
void read_latent(const fs::path& path, PosteriorDraws& draws, const PanelData& data);
void write_summary(const fs::path& path, const std::vector<ParameterSummary>& rows);

// Policies and allocations.
struct PolicyFile {
  PolicyParams params;
  double budget = 0.5;
  std::vector<FactorSpec> factors;  // empty when the file does not list them
};
void write_policy(const fs::path& path, const PolicyFile& policy);
PolicyFile read_policy(const fs::path& path);

void write_allocation(const fs::path& path, const ZoneGraph& graph, const Eigen::VectorXd& coverage);
Eigen::VectorXd read_allocation(const fs::path& path, const ZoneGraph& graph);

// Search output.
void write_trace(const fs::path& path, const std::vector<TraceEntry>& trace);
void write_alpha_posterior(const fs::path& samples, const fs::path& quantiles, const AlphaPosterior& posterior);

}  // namespace netalloc::io
