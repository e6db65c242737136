#include "netalloc/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "netalloc/errors.hpp"

namespace netalloc::io {

using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != last)
    throw DataError(where + ": expected a number, got '" + text + "'");
  return v;
}

std::string where(const CsvTable& t, std::size_t row) {
  return t.path + ":" + std::to_string(t.lines.at(row));
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError(path + ": missing column '" + name + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  return parse_double(rows.at(row).at(col), where(*this, row));
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable t;
  t.path = path.string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError(t.path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw DataError(t.path + ": empty file");
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw DataError("write failed for " + path.string());
}

ZonesTable read_zones(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("zone_id"), pop = t.column("population");
  ZonesTable z;
  std::vector<std::size_t> cov_cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == id || c == pop) continue;
    cov_cols.push_back(c);
    z.covariate_names.push_back(t.header[c]);
  }
  z.covariates.resize(static_cast<Index>(t.rows.size()), static_cast<Index>(cov_cols.size()));
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& zid = t.rows[r][id];
    if (zid.empty()) throw DataError(where(t, r) + ": empty zone_id");
    if (!seen.insert(zid).second) throw DataError(where(t, r) + ": duplicate zone_id '" + zid + "'");
    z.zone_ids.push_back(zid);
    z.populations.push_back(t.number(r, pop));
    for (std::size_t k = 0; k < cov_cols.size(); ++k)
      z.covariates(static_cast<Index>(r), static_cast<Index>(k)) = t.number(r, cov_cols[k]);
  }
  return z;
}

std::vector<std::pair<std::string, std::string>> read_adjacency(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t a = t.column("zone_a"), b = t.column("zone_b");
  std::vector<std::pair<std::string, std::string>> edges;
  edges.reserve(t.rows.size());
  for (const auto& row : t.rows) edges.emplace_back(row[a], row[b]);
  return edges;
}

void write_zones(const fs::path& path, const ZoneGraph& graph, const Eigen::MatrixXd& covariates,
                 const std::vector<std::string>& names) {
  std::vector<std::string> header{"zone_id", "population"};
  header.insert(header.end(), names.begin(), names.end());
  std::string text = join_row(header);
  for (Index l = 0; l < graph.size(); ++l) {
    std::vector<std::string> row{graph.zone_ids()[static_cast<std::size_t>(l)], format_double(graph.populations()(l))};
    for (Index k = 0; k < covariates.cols(); ++k) row.push_back(format_double(covariates(l, k)));
    text += join_row(row);
  }
  write_text(path, text);
}

void write_adjacency(const fs::path& path, const ZoneGraph& graph) {
  std::string text = "zone_a,zone_b\n";
  for (const auto& [i, j] : graph.edges())
    text += graph.zone_ids()[static_cast<std::size_t>(i)] + "," + graph.zone_ids()[static_cast<std::size_t>(j)] + "\n";
  write_text(path, text);
}

PanelData load_panel(const fs::path& zones_path, const fs::path& adjacency_path, const fs::path& observations_path) {
  const ZonesTable zones = read_zones(zones_path);
  PanelData data{load_graph(zones, read_adjacency(adjacency_path)), zones.covariates, zones.covariate_names, {}, {}, 0};

  const CsvTable t = read_csv(observations_path);
  const std::size_t cz = t.column("zone_id"), cy = t.column("year"), cp = t.column("prevalence"),
                    cc = t.column("coverage");
  if (t.rows.empty()) throw DataError(t.path + ": no observations");
  std::map<int, int> year_index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double y = t.number(r, cy);
    if (y != static_cast<int>(y)) throw DataError(where(t, r) + ": year must be an integer");
    year_index.emplace(static_cast<int>(y), 0);
  }
  const int first = year_index.begin()->first, last = year_index.rbegin()->first;
  if (static_cast<int>(year_index.size()) != last - first + 1)
    throw DataError(t.path + ": years must be consecutive");
  const Index n = data.zones(), years = last - first + 1;
  data.first_year = first;
  data.logit_prevalence = Eigen::MatrixXd::Constant(n, years, std::numeric_limits<double>::quiet_NaN());
  data.allocations = Eigen::MatrixXd::Constant(n, years - 1, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> filled(static_cast<std::size_t>(n * years), 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::optional<Index> found = data.graph.index_of(t.rows[r][cz]);
    if (!found) throw DataError(where(t, r) + ": unknown zone_id '" + t.rows[r][cz] + "'");
    const Index l = *found;
    const int year = static_cast<int>(t.number(r, cy)) - first;
    char& seen = filled[static_cast<std::size_t>(l * years + year)];
    if (seen) throw DataError(where(t, r) + ": duplicate observation for zone '" + t.rows[r][cz] + "'");
    seen = 1;
    const double p = t.number(r, cp);
    if (!(p > 0.0 && p < 1.0)) throw DataError(where(t, r) + ": prevalence must lie in (0, 1)");
    data.logit_prevalence(l, year) = logit(p);
    const std::string& cov = t.rows[r][cc];
    if (year == 0) {
      if (!cov.empty()) throw DataError(where(t, r) + ": coverage must be blank in the first year");
    } else {
      if (cov.empty()) throw DataError(where(t, r) + ": missing coverage");
      data.allocations(l, year - 1) = t.number(r, cc);
    }
  }
  for (std::size_t k = 0; k < filled.size(); ++k)
    if (!filled[k]) throw DataError(t.path + ": missing observation for zone '" +
                                    data.graph.zone_ids()[k / static_cast<std::size_t>(years)] + "'");
  data.validate();
  return data;
}

void write_observations(const fs::path& path, const PanelData& data) {
  std::string text = "zone_id,year,prevalence,coverage\n";
  for (Index l = 0; l < data.zones(); ++l) {
    const std::string& id = data.graph.zone_ids()[static_cast<std::size_t>(l)];
    for (Index t = 0; t < data.logit_prevalence.cols(); ++t) {
      text += id + "," + std::to_string(data.first_year + t) + "," + format_double(inv_logit(data.logit_prevalence(l, t))) +
              "," + (t == 0 ? std::string() : format_double(data.allocations(l, t - 1))) + "\n";
    }
  }
  write_text(path, text);
}

void write_panel(const fs::path& dir, const PanelData& data) {
  write_zones(dir / "zones.csv", data.graph, data.covariates, data.covariate_names);
  write_adjacency(dir / "adjacency.csv", data.graph);
  write_observations(dir / "observations.csv", data);
}

void write_draws(const fs::path& csv, const fs::path& json_sidecar, const PosteriorDraws& draws) {
  const Index p = draws.draws.empty() ? 0 : draws.draws.front().params.covariate_count();
  const std::vector<std::string> names = parameter_names(p);
  std::vector<std::string> header{"draw"};
  header.insert(header.end(), names.begin(), names.end());
  std::string text = join_row(header);
  for (std::size_t d = 0; d < draws.draws.size(); ++d) {
    const Eigen::VectorXd v = flatten_params(draws.draws[d].params);
    std::vector<std::string> row{std::to_string(d)};
    for (Index k = 0; k < v.size(); ++k) row.push_back(format_double(v(k)));
    text += join_row(row);
  }
  write_text(csv, text);

  json meta;
  meta["seed"] = draws.seed;
  meta["n_iter"] = draws.n_iter;
  meta["burn_in"] = draws.burn_in;
  meta["n_kept"] = draws.draws.size();
  meta["acceptance_rate_rho"] = draws.acceptance_rate_rho;
  meta["covariate_count"] = p;
  meta["parameters"] = names;
  write_text(json_sidecar, meta.dump(2) + "\n");
}

PosteriorDraws read_draws(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  if (t.header.empty() || t.header.front() != "draw") throw DataError(t.path + ": first column must be 'draw'");
  const Index count = static_cast<Index>(t.header.size()) - 1;
  // c0, b0, c1, b1, c2, b2, 2p betas, three variance terms
  if (count < 9 || (count - 9) % 2 != 0) throw DataError(t.path + ": unexpected parameter columns");
  const Index p = (count - 9) / 2;
  const std::vector<std::string> names = parameter_names(p);
  for (Index k = 0; k < count; ++k)
    if (t.header[static_cast<std::size_t>(k + 1)] != names[static_cast<std::size_t>(k)])
      throw DataError(t.path + ": expected column '" + names[static_cast<std::size_t>(k)] + "'");
  PosteriorDraws out;
  out.draws.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Eigen::VectorXd v(count);
    for (Index k = 0; k < count; ++k) v(k) = t.number(r, static_cast<std::size_t>(k + 1));
    out.draws.push_back({unflatten_params(v, p), {}});
  }
  const fs::path sidecar = fs::path(csv).replace_extension(".json");
  if (fs::exists(sidecar)) {
    const json meta = read_json(sidecar);
    out.seed = meta.value("seed", std::uint64_t{0});
    out.n_iter = meta.value("n_iter", 0);
    out.burn_in = meta.value("burn_in", 0);
    out.acceptance_rate_rho = meta.value("acceptance_rate_rho", 0.0);
  }
  return out;
}

void write_latent(const fs::path& path, const PosteriorDraws& draws, const PanelData& data, int last_years) {
  std::string text = "draw,zone_id,year,eta\n";
  for (std::size_t d = 0; d < draws.draws.size(); ++d) {
    const Eigen::MatrixXd& eta = draws.draws[d].latent;
    const Index cols = eta.cols();
    const Index from = last_years > 0 ? std::max<Index>(0, cols - last_years) : 0;
    // latent slices always end at the last observed year
    const int year_offset = data.first_year + static_cast<int>(data.logit_prevalence.cols() - cols);
    for (Index t = from; t < cols; ++t)
      for (Index l = 0; l < eta.rows(); ++l)
        text += std::to_string(d) + "," + data.graph.zone_ids()[static_cast<std::size_t>(l)] + "," +
                std::to_string(year_offset + t) + "," + format_double(eta(l, t)) + "\n";
  }
  write_text(path, text);
}

void read_latent(const fs::path& path, PosteriorDraws& draws, const PanelData& data) {
  const CsvTable t = read_csv(path);
  const std::size_t cd = t.column("draw"), cz = t.column("zone_id"), cy = t.column("year"), ce = t.column("eta");
  std::map<int, int> years;
  for (std::size_t r = 0; r < t.rows.size(); ++r) years.emplace(static_cast<int>(t.number(r, cy)), 0);
  int k = 0;
  for (auto& [y, idx] : years) idx = k++;
  const Index n = data.zones();
  for (auto& d : draws.draws) d.latent = Eigen::MatrixXd::Constant(n, k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double dv = t.number(r, cd);
    if (dv < 0 || dv >= static_cast<double>(draws.draws.size()) || dv != static_cast<std::size_t>(dv))
      throw DataError(where(t, r) + ": draw index out of range");
    const std::optional<Index> found = data.graph.index_of(t.rows[r][cz]);
    if (!found) throw DataError(where(t, r) + ": unknown zone_id '" + t.rows[r][cz] + "'");
    const Index l = *found;
    draws.draws[static_cast<std::size_t>(dv)].latent(l, years.at(static_cast<int>(t.number(r, cy)))) = t.number(r, ce);
  }
  for (const auto& d : draws.draws)
    if (!d.latent.allFinite()) throw DataError(t.path + ": incomplete latent field");
}

void write_summary(const fs::path& path, const std::vector<ParameterSummary>& rows) {
  std::string text = "parameter,mean,lower_95,upper_95,excludes_zero\n";
  for (const auto& s : rows)
    text += s.name + "," + format_double(s.mean) + "," + format_double(s.lower) + "," + format_double(s.upper) + "," +
            (s.excludes_zero ? "1" : "0") + "\n";
  write_text(path, text);
}

void write_policy(const fs::path& path, const PolicyFile& policy) {
  json j;
  j["alpha0"] = policy.params.alpha0;
  j["alpha"] = std::vector<double>(policy.params.alpha.data(), policy.params.alpha.data() + policy.params.alpha.size());
  j["utility_kind"] = to_string(policy.params.kind);
  j["budget"] = policy.budget;
  if (!policy.factors.empty()) {
    std::vector<std::string> names;
    for (const auto& f : policy.factors) names.push_back(f.name());
    j["factors"] = names;
  }
  write_text(path, j.dump(2) + "\n");
}

PolicyFile read_policy(const fs::path& path) {
  const json j = read_json(path);
  PolicyFile out;
  try {
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "alpha0" && key != "alpha" && key != "utility_kind" && key != "budget" && key != "factors")
        throw ConfigError(path.string() + ": unknown key '" + key + "'");
    }
    out.params.alpha0 = j.at("alpha0").get<double>();
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    out.params.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Index>(alpha.size()));
    out.params.kind = parse_utility_kind(j.at("utility_kind").get<std::string>());
    out.budget = j.at("budget").get<double>();
    if (j.contains("factors"))
      for (const auto& f : j.at("factors")) out.factors.push_back(FactorSpec::parse(f.get<std::string>()));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  out.params.validate();
  if (!(out.budget >= 0.0 && out.budget <= 1.0)) throw ConfigError(path.string() + ": budget must lie in [0, 1]");
  if (!out.factors.empty() && static_cast<Index>(out.factors.size()) != out.params.alpha.size())
    throw ConfigError(path.string() + ": factor list does not match alpha length");
  return out;
}

void write_allocation(const fs::path& path, const ZoneGraph& graph, const Eigen::VectorXd& coverage) {
  std::string text = "zone_id,coverage\n";
  for (Index l = 0; l < graph.size(); ++l)
    text += graph.zone_ids()[static_cast<std::size_t>(l)] + "," + format_double(coverage(l)) + "\n";
  write_text(path, text);
}

Eigen::VectorXd read_allocation(const fs::path& path, const ZoneGraph& graph) {
  const CsvTable t = read_csv(path);
  const std::size_t cz = t.column("zone_id"), cc = t.column("coverage");
  Eigen::VectorXd a = Eigen::VectorXd::Constant(graph.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::optional<Index> found = graph.index_of(t.rows[r][cz]);
    if (!found) throw DataError(where(t, r) + ": unknown zone_id '" + t.rows[r][cz] + "'");
    const Index l = *found;
    a(l) = t.number(r, cc);
  }
  if (!a.allFinite()) throw DataError(t.path + ": allocation missing zones");
  return a;
}

void write_trace(const fs::path& path, const std::vector<TraceEntry>& trace) {
  const Index d = trace.empty() ? 1 : trace.front().point.size();
  std::vector<std::string> header{"iter"};
  for (Index k = 0; k < d; ++k) header.push_back("alpha" + std::to_string(k));
  header.insert(header.end(), {"loss", "loss_se", "is_initial"});
  std::string text = join_row(header);
  for (const auto& e : trace) {
    std::vector<std::string> row{std::to_string(e.iter)};
    for (Index k = 0; k < e.point.size(); ++k) row.push_back(format_double(e.point(k)));
    row.insert(row.end(), {format_double(e.loss), format_double(e.loss_se), e.is_initial ? "1" : "0"});
    text += join_row(row);
  }
  write_text(path, text);
}

void write_alpha_posterior(const fs::path& samples, const fs::path& quantiles, const AlphaPosterior& posterior) {
  const Index d = posterior.samples.cols();
  std::vector<std::string> header{"draw"};
  for (Index k = 0; k < d; ++k) header.push_back("alpha" + std::to_string(k));
  std::string text = join_row(header);
  for (Index r = 0; r < posterior.samples.rows(); ++r) {
    std::vector<std::string> row{std::to_string(r)};
    for (Index k = 0; k < d; ++k) row.push_back(format_double(posterior.samples(r, k)));
    text += join_row(row);
  }
  write_text(samples, text);

  header.front() = "quantile";
  text = join_row(header);
  for (std::size_t j = 0; j < posterior.probs.size(); ++j) {
    std::vector<std::string> row{format_double(posterior.probs[j])};
    for (Index k = 0; k < d; ++k) row.push_back(format_double(posterior.quantiles(static_cast<Index>(j), k)));
    text += join_row(row);
  }
  write_text(quantiles, text);
}

}  // namespace netalloc::io
