#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "netalloc/random.hpp"

namespace netalloc {

using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Health-zone adjacency graph with per-zone populations.
///
/// Neighbor lists are sorted, symmetric and free of self loops, and every zone
/// has at least one neighbor. Instances are immutable once built.
class ZoneGraph {
 public:
  /// Builds the graph from undirected edges given as index pairs. Duplicate
  /// edges and either orientation are accepted; self loops and isolated zones
  /// are rejected with DataError.
  ZoneGraph(std::vector<std::string> zone_ids, std::vector<double> populations,
            const std::vector<std::pair<Index, Index>>& edges);

  Index size() const { return static_cast<Index>(zone_ids_.size()); }
  const std::vector<std::string>& zone_ids() const { return zone_ids_; }
  const Eigen::VectorXd& populations() const { return populations_; }
  /// N_l / sum(N).
  Eigen::VectorXd population_weights() const;

  std::span<const Index> neighbors(Index zone) const;
  Index degree(Index zone) const { return static_cast<Index>(neighbors_[zone].size()); }
  Eigen::VectorXd degrees() const;

  /// Undirected edges (i < j), ordered by (i, j).
  std::vector<std::pair<Index, Index>> edges() const;
  std::size_t edge_count() const { return edge_count_; }

  /// Adjacency matrix G.
  SparseMatrix adjacency() const;
  /// Graph Laplacian M - G.
  SparseMatrix laplacian() const;

  /// (1/m_l) * sum_{j in I_l} v_j for every zone.
  Eigen::VectorXd neighbor_mean(const Eigen::VectorXd& values) const;

  /// Position of `id` in zone_ids, or nullopt.
  std::optional<Index> index_of(const std::string& id) const;

  /// Planar centroids (n x 2) when the graph came from a lattice.
  const std::optional<Eigen::MatrixX2d>& coordinates() const { return coordinates_; }
  ZoneGraph with_coordinates(Eigen::MatrixX2d coords) const;

  /// Same zones, populations and neighbor lists. Coordinates are ignored.
  bool operator==(const ZoneGraph& other) const;

 private:
  std::vector<std::string> zone_ids_;
  Eigen::VectorXd populations_;
  std::vector<std::vector<Index>> neighbors_;
  std::size_t edge_count_ = 0;
  std::optional<Eigen::MatrixX2d> coordinates_;
};

/// Rook-adjacency lattice with unit spacing; populations are 1.
ZoneGraph build_grid_graph(int rows, int cols);

/// Zones table as read from `zone_id,population,x1,...,xp`.
struct ZonesTable {
  std::vector<std::string> zone_ids;
  std::vector<double> populations;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;  // n x p
};

/// Resolves an id-based edge list against the zones table. Unknown ids,
/// non-positive populations and isolated zones raise DataError.
ZoneGraph load_graph(const ZonesTable& zones,
                     const std::vector<std::pair<std::string, std::string>>& edges);

/// CAR precision sigma_s^-2 (M - rho G) with a cached sparse Cholesky factor.
class CarPrecision {
 public:
  CarPrecision(const ZoneGraph& graph, double rho, double sigma_s2);

  double rho() const { return rho_; }
  double sigma_s2() const { return sigma_s2_; }
  Index size() const { return precision_.rows(); }
  const SparseMatrix& matrix() const { return precision_; }

  /// log det of the precision matrix.
  double log_determinant() const { return log_det_; }
  /// x' Q x.
  double quadratic_form(const Eigen::VectorXd& x) const;

  /// Maps iid standard normals w to a draw from MVN(0, Q^{-1}).
  Eigen::VectorXd color(const Eigen::VectorXd& white) const;
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  using Factor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  double rho_;
  double sigma_s2_;
  SparseMatrix precision_;
  std::shared_ptr<const Factor> factor_;
  double log_det_ = 0.0;
};

CarPrecision build_car_precision(const ZoneGraph& graph, double rho, double sigma_s2);

/// log det(M - rho G) by sparse Cholesky; throws NumericalError if not SPD.
double car_log_determinant(const ZoneGraph& graph, double rho);

}  // namespace netalloc
