#include <benchmark/benchmark.h>

#include "netalloc/allocation_policy.hpp"
#include "netalloc/bayes_inference.hpp"
#include "netalloc/rollout_value.hpp"
#include "netalloc/surrogate.hpp"

using namespace netalloc;

namespace {

Eigen::VectorXd random_scores(Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  Eigen::VectorXd s(n);
  for (Index l = 0; l < n; ++l) s(l) = u(rng);
  return s;
}

void BM_Allocate(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ZoneGraph g = build_grid_graph(side, side);
  const Eigen::VectorXd s = random_scores(g.size(), 1);
  PolicyParams p;
  p.alpha = Eigen::VectorXd::Ones(1);
  p.alpha0 = 0.3;
  p.kind = state.range(1) ? UtilityKind::quadratic : UtilityKind::linear;
  for (auto _ : state) benchmark::DoNotOptimize(allocate(s, p, g, 0.5).coverage.data());
  state.SetLabel(to_string(p.kind));
}
BENCHMARK(BM_Allocate)->Args({10, 0})->Args({10, 1})->Args({23, 0})->Args({23, 1})->Unit(benchmark::kMicrosecond);

void BM_CarSample(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ZoneGraph g = build_grid_graph(side, side);
  const CarPrecision q(g, 0.9, 0.01);
  Rng rng = make_rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(q.sample(rng).data());
}
BENCHMARK(BM_CarSample)->Arg(10)->Arg(23)->Unit(benchmark::kMicrosecond);

void BM_GibbsSweeps(benchmark::State& state) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 3);
  const int sweeps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gibbs_fit(sim.data, {}, sweeps, sweeps - 1, 4).draws.size());
  state.SetItemsProcessed(state.iterations() * sweeps);
}
BENCHMARK(BM_GibbsSweeps)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_RolloutLoss(benchmark::State& state) {
  const SimulatedPanel sim = simulate_panel(ScenarioSpec::correct_spec(), 5);
  PosteriorDraws draws;
  for (int i = 0; i < 10; ++i) draws.draws.push_back({sim.spec.truth, sim.latent});
  RolloutConfig c;
  c.n_rollouts = static_cast<int>(state.range(0));
  c.factors = {FactorSpec::parse("x1"), FactorSpec::parse("logit_rate"), FactorSpec::parse("neighbor_logit_rate"),
               FactorSpec::parse("rate_gradient")};
  PolicyParams p;
  p.alpha = Eigen::Vector4d(0.5, 1.0, 0.5, 0.2);
  p.alpha0 = 0.2;
  p.kind = UtilityKind::quadratic;
  const RolloutEngine engine = RolloutEngine::from_posterior(draws, sim.data, c);
  for (auto _ : state) benchmark::DoNotOptimize(engine.estimate(p).mean);
}
BENCHMARK(BM_RolloutLoss)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_SurrogateFit(benchmark::State& state) {
  const Index m = state.range(0);
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(5), hi = Eigen::VectorXd::Ones(5);
  Rng rng = make_rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(m, 5);
  Eigen::VectorXd y(m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < 5; ++j) x(i, j) = u(rng);
    y(i) = (x.row(i).array() - 0.4).square().sum() + 0.01 * u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(Surrogate::fit(x, y, lo, hi).log_likelihood());
}
BENCHMARK(BM_SurrogateFit)->Arg(100)->Arg(150)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
