#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "netalloc/errors.hpp"
#include "netalloc/spatial_graph.hpp"

using namespace netalloc;

namespace {

ZoneGraph path_graph() {
  return load_graph({{"A", "B", "C"}, {1.0, 1.0, 1.0}, {}, Eigen::MatrixXd(3, 0)}, {{"A", "B"}, {"B", "C"}});
}

}  // namespace

TEST(GridGraph, TenByTenHas180Edges) {
  const ZoneGraph g = build_grid_graph(10, 10);
  EXPECT_EQ(g.size(), 100);
  EXPECT_EQ(g.edge_count(), 180u);
  // corners 2, edges 3, interior 4
  EXPECT_EQ(g.degree(0), 2);
  EXPECT_EQ(g.degree(1), 3);
  EXPECT_EQ(g.degree(11), 4);
}

TEST(GridGraph, SmallestAndSquare) {
  const ZoneGraph g12 = build_grid_graph(1, 2);
  EXPECT_EQ(g12.size(), 2);
  EXPECT_EQ(g12.degree(0), 1);
  EXPECT_EQ(g12.degree(1), 1);
  const ZoneGraph g22 = build_grid_graph(2, 2);
  for (Index l = 0; l < 4; ++l) EXPECT_EQ(g22.degree(l), 2);
  EXPECT_THROW(build_grid_graph(1, 1), DataError);
}

TEST(GridGraph, AdjacencyIsSymmetricWithoutSelfLoops) {
  const ZoneGraph g = build_grid_graph(7, 5);
  for (Index l = 0; l < g.size(); ++l) {
    const auto nb = g.neighbors(l);
    EXPECT_TRUE(std::is_sorted(nb.begin(), nb.end()));
    for (Index j : nb) {
      EXPECT_NE(j, l);
      const auto back = g.neighbors(j);
      EXPECT_NE(std::find(back.begin(), back.end(), l), back.end());
    }
  }
}

TEST(LoadGraph, PathGraphDegrees) {
  const ZoneGraph g = path_graph();
  EXPECT_EQ(g.degree(0), 1);
  EXPECT_EQ(g.degree(1), 2);
  EXPECT_EQ(g.degree(2), 1);
}

TEST(LoadGraph, DuplicateEdgesCollapse) {
  const ZoneGraph g = load_graph({{"A", "B"}, {1.0, 2.0}, {}, Eigen::MatrixXd(2, 0)}, {{"A", "B"}, {"B", "A"}});
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.degree(0), 1);
  EXPECT_EQ(g.degree(1), 1);
}

TEST(LoadGraph, Errors) {
  const ZonesTable abc{{"A", "B", "C"}, {1.0, 1.0, 1.0}, {}, Eigen::MatrixXd(3, 0)};
  EXPECT_THROW(load_graph(abc, {{"A", "B"}}), DataError);                // C isolated
  EXPECT_THROW(load_graph(abc, {{"A", "B"}, {"B", "D"}}), DataError);    // unknown id
  EXPECT_THROW(load_graph(abc, {{"A", "A"}, {"B", "C"}}), DataError);    // self loop
  const ZonesTable bad_pop{{"A", "B"}, {1.0, 0.0}, {}, Eigen::MatrixXd(2, 0)};
  EXPECT_THROW(load_graph(bad_pop, {{"A", "B"}}), DataError);
}

TEST(CarPrecision, TwoZoneMatrix) {
  const ZoneGraph g = build_grid_graph(1, 2);
  const CarPrecision q(g, 0.5, 1.0);
  const Eigen::MatrixXd dense(q.matrix());
  EXPECT_DOUBLE_EQ(dense(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(dense(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(dense(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(dense(1, 0), -0.5);

  const CarPrecision tiny(g, 1e-9, 1.0);
  const Eigen::MatrixXd d2(tiny.matrix());
  EXPECT_DOUBLE_EQ(d2(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(d2(0, 1), -1e-9);
}

TEST(CarPrecision, ScalesWithVarianceAndOffDiagonalPattern) {
  const ZoneGraph g = build_grid_graph(3, 3);
  const CarPrecision q(g, 0.7, 0.25);
  const Eigen::MatrixXd d(q.matrix());
  for (Index i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(d(i, i), static_cast<double>(g.degree(i)) / 0.25, 1e-14);
    for (Index j = 0; j < g.size(); ++j) {
      if (i == j) continue;
      const auto nb = g.neighbors(i);
      const bool adjacent = std::find(nb.begin(), nb.end(), j) != nb.end();
      EXPECT_NEAR(d(i, j), adjacent ? -0.7 / 0.25 : 0.0, 1e-14);
    }
  }
}

TEST(CarPrecision, DomainErrors) {
  const ZoneGraph g = build_grid_graph(2, 2);
  EXPECT_THROW(CarPrecision(g, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(CarPrecision(g, 1.0, 1.0), std::domain_error);
  EXPECT_THROW(CarPrecision(g, 0.5, 0.0), std::domain_error);
}

TEST(CarPrecision, SpdOnGridByDenseEigenvalues) {
  const ZoneGraph g = build_grid_graph(10, 10);
  const CarPrecision q(g, 0.9, 0.25);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(q.matrix())};
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  // log-determinant from the factor agrees with the spectrum
  EXPECT_NEAR(q.log_determinant(), es.eigenvalues().array().log().sum(), 1e-8);
}

TEST(CarPrecision, SpdForAllTestedRho) {
  for (const ZoneGraph& g : {build_grid_graph(10, 10), build_grid_graph(1, 2), build_grid_graph(4, 7), path_graph()}) {
    for (double rho : {0.1, 0.5, 0.9, 0.999}) {
      EXPECT_NO_THROW(CarPrecision(g, rho, 1.0));
      EXPECT_TRUE(std::isfinite(car_log_determinant(g, rho)));
    }
  }
}

TEST(CarPrecision, ChiSquareMomentCheck) {
  const ZoneGraph g = build_grid_graph(10, 10);
  const CarPrecision q(g, 0.9, 0.25);
  Rng rng = make_rng(42);
  const int draws = 4000;
  double sum = 0.0;
  for (int k = 0; k < draws; ++k) sum += q.quadratic_form(q.sample(rng));
  const double n = static_cast<double>(g.size());
  const double se = std::sqrt(2.0 * n / draws);
  EXPECT_NEAR(sum / draws, n, 3.0 * se);
}

TEST(CarPrecision, ColorInvertsPrecision) {
  // Cov(color(w)) = Q^{-1}  <=>  color(w)' Q color(w) = w'w for every w.
  const ZoneGraph g = build_grid_graph(4, 5);
  const CarPrecision q(g, 0.6, 0.3);
  Rng rng = make_rng(3);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd w = standard_normal_vector(rng, g.size());
    EXPECT_NEAR(q.quadratic_form(q.color(w)), w.squaredNorm(), 1e-9 * w.squaredNorm());
  }
}

TEST(ZoneGraph, NeighborMeanAndLaplacian) {
  const ZoneGraph g = path_graph();
  const Eigen::VectorXd v = Eigen::Vector3d(1.0, 2.0, 4.0);
  const Eigen::VectorXd m = g.neighbor_mean(v);
  EXPECT_DOUBLE_EQ(m(0), 2.0);
  EXPECT_DOUBLE_EQ(m(1), 2.5);
  EXPECT_DOUBLE_EQ(m(2), 2.0);
  const Eigen::VectorXd lv = g.laplacian() * v;
  EXPECT_DOUBLE_EQ(lv(0), -1.0);
  EXPECT_DOUBLE_EQ(lv(1), -1.0);
  EXPECT_DOUBLE_EQ(lv(2), 2.0);
}
