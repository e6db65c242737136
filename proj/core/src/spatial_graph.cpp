#include "netalloc/spatial_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "netalloc/errors.hpp"

namespace netalloc {

ZoneGraph::ZoneGraph(std::vector<std::string> zone_ids, std::vector<double> populations,
                     const std::vector<std::pair<Index, Index>>& edges)
    : zone_ids_(std::move(zone_ids)) {
  const auto n = static_cast<Index>(zone_ids_.size());
  if (n < 2) throw DataError("zone graph needs at least two zones");
  if (static_cast<Index>(populations.size()) != n)
    throw DataError("zone graph: population count does not match zone count");
  populations_ = Eigen::Map<const Eigen::VectorXd>(populations.data(), n);
  for (Index l = 0; l < n; ++l) {
    if (!(populations_(l) > 0.0) || !std::isfinite(populations_(l)))
      throw DataError("zone '" + zone_ids_[l] + "' has non-positive population");
  }

  neighbors_.assign(n, {});
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n) throw DataError("zone graph: edge index out of range");
    if (i == j) throw DataError("zone graph: self loop at zone '" + zone_ids_[i] + "'");
    neighbors_[i].push_back(j);
    neighbors_[j].push_back(i);
  }
  for (Index l = 0; l < n; ++l) {
    auto& nb = neighbors_[l];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    if (nb.empty()) throw DataError("zone '" + zone_ids_[l] + "' is isolated (no neighbors)");
    edge_count_ += nb.size();
  }
  edge_count_ /= 2;
}

Eigen::VectorXd ZoneGraph::population_weights() const { return populations_ / populations_.sum(); }

std::span<const Index> ZoneGraph::neighbors(Index zone) const {
  const auto& nb = neighbors_.at(static_cast<std::size_t>(zone));
  return {nb.data(), nb.size()};
}

Eigen::VectorXd ZoneGraph::degrees() const {
  Eigen::VectorXd m(size());
  for (Index l = 0; l < size(); ++l) m(l) = static_cast<double>(neighbors_[l].size());
  return m;
}

std::vector<std::pair<Index, Index>> ZoneGraph::edges() const {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(edge_count_);
  for (Index i = 0; i < size(); ++i)
    for (Index j : neighbors_[i])
      if (i < j) out.emplace_back(i, j);
  return out;
}

SparseMatrix ZoneGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * edge_count_);
  for (Index i = 0; i < size(); ++i)
    for (Index j : neighbors_[i]) t.emplace_back(i, j, 1.0);
  SparseMatrix g(size(), size());
  g.setFromTriplets(t.begin(), t.end());
  return g;
}

SparseMatrix ZoneGraph::laplacian() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * edge_count_ + size());
  for (Index i = 0; i < size(); ++i) {
    t.emplace_back(i, i, static_cast<double>(neighbors_[i].size()));
    for (Index j : neighbors_[i]) t.emplace_back(i, j, -1.0);
  }
  SparseMatrix l(size(), size());
  l.setFromTriplets(t.begin(), t.end());
  return l;
}

Eigen::VectorXd ZoneGraph::neighbor_mean(const Eigen::VectorXd& values) const {
  if (values.size() != size()) throw std::invalid_argument("neighbor_mean: dimension mismatch");
  Eigen::VectorXd out(size());
  for (Index i = 0; i < size(); ++i) {
    double s = 0.0;
    for (Index j : neighbors_[i]) s += values(j);
    out(i) = s / static_cast<double>(neighbors_[i].size());
  }
  return out;
}

std::optional<Index> ZoneGraph::index_of(const std::string& id) const {
  const auto it = std::find(zone_ids_.begin(), zone_ids_.end(), id);
  if (it == zone_ids_.end()) return std::nullopt;
  return static_cast<Index>(it - zone_ids_.begin());
}

ZoneGraph ZoneGraph::with_coordinates(Eigen::MatrixX2d coords) const {
  if (coords.rows() != size()) throw std::invalid_argument("coordinates: row count mismatch");
  ZoneGraph g = *this;
  g.coordinates_ = std::move(coords);
  return g;
}

bool ZoneGraph::operator==(const ZoneGraph& other) const {
  return zone_ids_ == other.zone_ids_ && populations_ == other.populations_ &&
         neighbors_ == other.neighbors_;
}

ZoneGraph build_grid_graph(int rows, int cols) {
  if (rows < 1 || cols < 1 || static_cast<long>(rows) * cols < 2)
    throw DataError("grid graph needs rows*cols >= 2");
  const auto id = [cols](int r, int c) { return static_cast<Index>(r) * cols + c; };
  std::vector<std::string> ids;
  Eigen::MatrixX2d coords(static_cast<Index>(rows) * cols, 2);
  std::vector<std::pair<Index, Index>> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      ids.push_back("z" + std::to_string(id(r, c)));
      coords(id(r, c), 0) = c;
      coords(id(r, c), 1) = r;
      if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
    }
  }
  std::vector<double> pops(ids.size(), 1.0);
  return ZoneGraph(std::move(ids), std::move(pops), edges).with_coordinates(std::move(coords));
}

ZoneGraph load_graph(const ZonesTable& zones,
                     const std::vector<std::pair<std::string, std::string>>& edges) {
  std::unordered_map<std::string, Index> lookup;
  for (std::size_t i = 0; i < zones.zone_ids.size(); ++i) {
    if (!lookup.emplace(zones.zone_ids[i], static_cast<Index>(i)).second)
      throw DataError("duplicate zone id '" + zones.zone_ids[i] + "'");
  }
  std::vector<std::pair<Index, Index>> idx;
  idx.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    const auto ia = lookup.find(a);
    const auto ib = lookup.find(b);
    if (ia == lookup.end()) throw DataError("adjacency references unknown zone '" + a + "'");
    if (ib == lookup.end()) throw DataError("adjacency references unknown zone '" + b + "'");
    idx.emplace_back(ia->second, ib->second);
  }
  return ZoneGraph(zones.zone_ids, zones.populations, idx);
}

namespace {

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

void check_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("CAR rho must lie in (0, 1)");
}

}  // namespace

CarPrecision::CarPrecision(const ZoneGraph& graph, double rho, double sigma_s2)
    : rho_(rho), sigma_s2_(sigma_s2) {
  check_rho(rho);
  if (!(sigma_s2 > 0.0)) throw std::domain_error("CAR variance sigma_s2 must be positive");
  precision_ = car_structure(graph, rho) / sigma_s2;
  auto factor = std::make_shared<Factor>(precision_);
  if (factor->info() != Eigen::Success)
    throw NumericalError("CAR precision is not positive definite (disconnected or degenerate graph?)");
  log_det_ = 2.0 * factor->matrixL().nestedExpression().diagonal().array().log().sum();
  factor_ = std::move(factor);
}

double CarPrecision::quadratic_form(const Eigen::VectorXd& x) const {
  return x.dot(precision_ * x);
}

Eigen::VectorXd CarPrecision::color(const Eigen::VectorXd& white) const {
  if (white.size() != size()) throw std::invalid_argument("CarPrecision::color: dimension mismatch");
  // P Q P' = L L'  =>  x = P' L^{-T} w has covariance Q^{-1}.
  Eigen::VectorXd y = factor_->matrixU().solve(white);
  return factor_->permutationPinv() * y;
}

Eigen::VectorXd CarPrecision::sample(Rng& rng) const {
  return color(standard_normal_vector(rng, size()));
}

CarPrecision build_car_precision(const ZoneGraph& graph, double rho, double sigma_s2) {
  return CarPrecision(graph, rho, sigma_s2);
}

double car_log_determinant(const ZoneGraph& graph, double rho) {
  check_rho(rho);
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt(
      car_structure(graph, rho));
  if (llt.info() != Eigen::Success) throw NumericalError("M - rho G is not positive definite");
  return 2.0 * llt.matrixL().nestedExpression().diagonal().array().log().sum();
}

}  // namespace netalloc
