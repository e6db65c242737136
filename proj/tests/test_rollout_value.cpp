#include <gtest/gtest.h>

#include <numeric>

#include "netalloc/errors.hpp"
#include "netalloc/rollout_value.hpp"

using namespace netalloc;

namespace {

PolicyParams linear_policy(Eigen::VectorXd alpha, double alpha0 = 0.0) {
  PolicyParams p;
  p.alpha = std::move(alpha);
  p.alpha0 = alpha0;
  return p;
}

// Two zones, zero covariates, one noiseless draw started at eta = 0.
struct TwoZone {
  PanelData data;
  PosteriorDraws draws;
};

TwoZone two_zone() {
  const ZoneGraph g = build_grid_graph(1, 2);
  TwoZone s{PanelData{g, Eigen::MatrixXd::Zero(2, 1), {"x1"}, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1), 0},
            {}};
  DynamicsParams p = ScenarioSpec::correct_spec().truth;
  p.sigma_e2 = 0.0;
  p.sigma_s2 = 0.0;
  s.draws.draws.push_back({p, Eigen::MatrixXd::Zero(2, 2)});
  return s;
}

RolloutConfig config(double budget, int horizon, int n_rollouts, std::vector<FactorSpec> factors) {
  RolloutConfig c;
  c.budget = budget;
  c.horizon = horizon;
  c.n_rollouts = n_rollouts;
  c.factors = std::move(factors);
  c.seed = 42;
  return c;
}

std::vector<FactorSpec> default_factors() {
  return {FactorSpec::parse("x1"), FactorSpec::parse("logit_rate"), FactorSpec::parse("neighbor_logit_rate"),
          FactorSpec::parse("rate_gradient")};
}

// Posterior stand-in: copies of the generating parameters and latent field.
PosteriorDraws truth_draws(const SimulatedPanel& sim, int copies) {
  PosteriorDraws d;
  for (int i = 0; i < copies; ++i) d.draws.push_back({sim.spec.truth, sim.latent});
  return d;
}

}  // namespace

TEST(FactorSpec, ParseAndNames) {
  EXPECT_EQ(FactorSpec::parse("x3").covariate, 2);
  EXPECT_EQ(FactorSpec::parse("x3").name(), "x3");
  EXPECT_EQ(FactorSpec::parse("rate_gradient").kind, FactorKind::rate_gradient);
  for (const char* bad : {"x0", "x", "xa", "y1", "rate", "x1b"}) EXPECT_THROW(FactorSpec::parse(bad), ConfigError) << bad;
}

TEST(RiskFactors, ColumnsMatchDefinitions) {
  const ZoneGraph g = build_grid_graph(2, 2);
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  const Eigen::Vector4d cur(0.1, 0.2, 0.3, 0.4), prev(0.0, 0.5, 0.5, 0.0);
  const RiskFactors f = build_risk_factors(
      {FactorSpec::parse("x2"), FactorSpec::parse("logit_rate"), FactorSpec::parse("neighbor_logit_rate"),
       FactorSpec::parse("rate_gradient")},
      g, x, cur, prev);
  EXPECT_EQ(f.values.col(0), x.col(1));
  EXPECT_EQ(f.values.col(1), Eigen::VectorXd(cur));
  EXPECT_NEAR(f.values(0, 2), 0.5 * (0.2 + 0.3), 1e-15);
  EXPECT_EQ(f.values.col(3), Eigen::VectorXd(cur - prev));
  EXPECT_EQ(f.names[2], "neighbor_logit_rate");
  EXPECT_THROW(build_risk_factors({FactorSpec::parse("x3")}, g, x, cur, prev), ConfigError);
}

TEST(EstimateLoss, DeterministicHandValues) {
  const TwoZone s = two_zone();
  const std::vector<FactorSpec> f{FactorSpec::parse("logit_rate")};
  const LossEstimate full = estimate_loss(linear_policy(Eigen::VectorXd::Ones(1)), s.draws, s.data, config(1.0, 1, 3, f));
  EXPECT_NEAR(full.mean, inv_logit(-0.5), 1e-12);
  EXPECT_NEAR(full.mean, 0.37754, 5e-6);
  EXPECT_EQ(full.std_error, 0.0);
  const LossEstimate none = estimate_loss(linear_policy(Eigen::VectorXd::Ones(1)), s.draws, s.data, config(0.0, 1, 3, f));
  EXPECT_NEAR(none.mean, 0.54983, 5e-6);
  // two noiseless years without coverage: eta = 0.2 then 0.9*0.2 + 0.1*0.2 + 0.2 = 0.4
  const LossEstimate two = estimate_loss(linear_policy(Eigen::VectorXd::Ones(1)), s.draws, s.data, config(0.0, 2, 1, f));
  EXPECT_NEAR(two.mean, 0.5 * (inv_logit(0.2) + inv_logit(0.4)), 1e-12);
  EXPECT_TRUE(two.degenerate);
}

TEST(EstimateLoss, DeterminismAndThreadIndependence) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 3);
  const PosteriorDraws draws = truth_draws(sim, 4);
  RolloutConfig c = config(0.5, 5, 64, default_factors());
  const PolicyParams pol = linear_policy(Eigen::Vector4d(0.5, 1.0, -0.3, 0.2), 0.2);
  const LossEstimate a = estimate_loss(pol, draws, sim.data, c);
  const LossEstimate b = estimate_loss(pol, draws, sim.data, c);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
  c.jobs = 3;
  const LossEstimate threaded = estimate_loss(pol, draws, sim.data, c);
  EXPECT_EQ(a.mean, threaded.mean);
  EXPECT_EQ(a.std_error, threaded.std_error);
  EXPECT_GT(a.mean, 0.0);
  EXPECT_LT(a.mean, 1.0);
  c.seed = 43;
  EXPECT_NE(estimate_loss(pol, draws, sim.data, c).mean, a.mean);
}

TEST(EstimateLoss, SingleRolloutIsDegenerate) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 3);
  const LossEstimate e = estimate_loss_fixed_policy(BaselinePolicy::even, truth_draws(sim, 1), sim.data,
                                                    config(0.5, 5, 1, default_factors()));
  EXPECT_TRUE(e.degenerate);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.n_rollouts, 1);
}

TEST(EstimateLoss, CoverageLowersLossWhenAllocationHelps) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 5);
  PosteriorDraws draws = truth_draws(sim, 2);
  for (auto& d : draws.draws) {
    ASSERT_LT(d.params.b0, 0.0);
    d.params.b1 = d.params.b2 = 0.0;
    d.params.beta2.setZero();
  }
  const auto full = estimate_loss_fixed_policy(BaselinePolicy::even, draws, sim.data, config(1.0, 5, 200, {}));
  const auto none = estimate_loss_fixed_policy(BaselinePolicy::even, draws, sim.data, config(0.0, 5, 200, {}));
  EXPECT_LT(full.mean, none.mean);
}

TEST(EstimateLoss, StandardErrorScalesWithRolloutCount) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 6);
  const PosteriorDraws draws = truth_draws(sim, 1);
  std::vector<double> se;
  for (int n : {100, 400, 1600})
    se.push_back(estimate_loss_fixed_policy(BaselinePolicy::highest_rate, draws, sim.data, config(0.5, 5, n, {})).std_error);
  for (std::size_t i = 0; i + 1 < se.size(); ++i) {
    const double ratio = se[i] / se[i + 1];
    EXPECT_GT(ratio, 1.0);
    EXPECT_LT(ratio, 4.0);
  }
}

TEST(EstimateLoss, NullAllocationEffectMakesPoliciesEqual) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 8);
  PosteriorDraws draws = truth_draws(sim, 3);
  for (auto& d : draws.draws) {
    d.params.b0 = d.params.b1 = d.params.b2 = 0.0;
    d.params.beta2.setZero();
  }
  const RolloutConfig c = config(0.5, 5, 300, default_factors());
  const LossEstimate hr = estimate_loss_fixed_policy(BaselinePolicy::highest_rate, draws, sim.data, c);
  const LossEstimate ev = estimate_loss_fixed_policy(BaselinePolicy::even, draws, sim.data, c);
  const LossEstimate lin = estimate_loss(linear_policy(Eigen::Vector4d(1, -2, 0.5, 3)), draws, sim.data, c);
  PolicyParams quad = linear_policy(Eigen::Vector4d(-1, 2, 1, 0), 0.7);
  quad.kind = UtilityKind::quadratic;
  const LossEstimate q = estimate_loss(quad, draws, sim.data, c);
  for (const LossEstimate* e : {&ev, &lin, &q}) {
    const double se = std::hypot(hr.std_error, e->std_error);
    EXPECT_LE(std::abs(hr.mean - e->mean), 3.0 * se);
  }
}

TEST(EstimateLoss, InvariantToZoneRelabeling) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 9);
  const Index n = sim.data.zones();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.rbegin(), perm.rend(), Index{0});  // reversal: new k is old n-1-k
  std::vector<std::string> ids;
  for (Index k = 0; k < n; ++k) ids.push_back(sim.data.graph.zone_ids()[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
  std::vector<std::pair<Index, Index>> edges;
  for (Index l = 0; l < n; ++l)
    for (Index m : sim.data.graph.neighbors(l))
      if (l < m) edges.emplace_back(n - 1 - l, n - 1 - m);
  const ZoneGraph g(ids, std::vector<double>(static_cast<std::size_t>(n), 1.0), edges);
  auto permute_rows = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Index k = 0; k < n; ++k) out.row(k) = m.row(perm[static_cast<std::size_t>(k)]);
    return out;
  };
  PanelData permuted{g, permute_rows(sim.data.covariates), sim.data.covariate_names,
                     permute_rows(sim.data.logit_prevalence), permute_rows(sim.data.allocations), 0};

  PosteriorDraws a = truth_draws(sim, 1), b;
  b.draws.push_back({sim.spec.truth, permute_rows(sim.latent)});
  const PolicyParams pol = linear_policy(Eigen::Vector4d(0.5, 1.0, -0.3, 0.2), 0.3);

  // noiseless: identical up to rounding
  for (auto* d : {&a, &b}) d->draws[0].params.sigma_e2 = d->draws[0].params.sigma_s2 = 0.0;
  const RolloutConfig c = config(0.4, 5, 2, default_factors());
  EXPECT_NEAR(estimate_loss(pol, a, sim.data, c).mean, estimate_loss(pol, b, permuted, c).mean, 1e-9);
  EXPECT_NEAR(estimate_loss_fixed_policy(BaselinePolicy::highest_rate, a, sim.data, c).mean,
              estimate_loss_fixed_policy(BaselinePolicy::highest_rate, b, permuted, c).mean, 1e-12);

  // noisy: equal in distribution
  for (auto* d : {&a, &b}) {
    d->draws[0].params.sigma_e2 = sim.spec.truth.sigma_e2;
    d->draws[0].params.sigma_s2 = sim.spec.truth.sigma_s2;
  }
  const RolloutConfig noisy = config(0.4, 5, 400, default_factors());
  const LossEstimate ea = estimate_loss(pol, a, sim.data, noisy);
  const LossEstimate eb = estimate_loss(pol, b, permuted, noisy);
  EXPECT_LE(std::abs(ea.mean - eb.mean), 4.0 * std::hypot(ea.std_error, eb.std_error));
}

TEST(EstimateLoss, Errors) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 3);
  const PosteriorDraws draws = truth_draws(sim, 1);
  EXPECT_THROW(estimate_loss(linear_policy(Eigen::VectorXd::Ones(1)), draws, sim.data,
                             config(0.5, 5, 10, {FactorSpec::parse("x2")})),
               ConfigError);
  EXPECT_THROW(estimate_loss(linear_policy(Eigen::VectorXd::Ones(2)), draws, sim.data,
                             config(0.5, 5, 10, {FactorSpec::parse("x1")})),
               std::invalid_argument);
  EXPECT_THROW(estimate_loss(linear_policy(Eigen::VectorXd::Ones(1)), PosteriorDraws{}, sim.data,
                             config(0.5, 5, 10, {FactorSpec::parse("x1")})),
               std::invalid_argument);
  EXPECT_THROW(estimate_loss_fixed_policy(BaselinePolicy::even, draws, sim.data, config(0.5, 0, 10, {})), ConfigError);
  EXPECT_THROW(estimate_loss_fixed_policy(BaselinePolicy::even, draws, sim.data, config(0.5, 5, 0, {})), ConfigError);
}

TEST(Improvement, Values) {
  EXPECT_NEAR(improvement(0.140, 0.135), 0.0357, 5e-5);
  EXPECT_NEAR(improvement(0.149, 0.136), 0.0872, 5e-5);
  EXPECT_EQ(improvement(0.2, 0.2), 0.0);
  EXPECT_THROW(improvement(0.0, 0.1), std::domain_error);
  LossEstimate base{0.149, 0.0005, 100, false}, pol{0.136, 0.0005, 100, false};
  EXPECT_DOUBLE_EQ(improvement(base, pol), improvement(0.149, 0.136));
}
