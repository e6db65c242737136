#include "netalloc/policy_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "netalloc/errors.hpp"
#include "netalloc/lhs.hpp"
#include "netalloc/random.hpp"

namespace netalloc {

Eigen::VectorXd SearchSpace::lower() const {
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(dimension(), -alpha_bound);
  lo(0) = 0.0;
  return lo;
}

Eigen::VectorXd SearchSpace::upper() const {
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(dimension(), alpha_bound);
  hi(0) = alpha0_max;
  return hi;
}

void SearchSpace::validate() const {
  if (q < 1) throw ConfigError("search space needs at least one risk factor");
  if (!std::isfinite(alpha_bound) || alpha_bound <= 0.0) throw ConfigError("alpha bound must be finite and positive");
  if (!std::isfinite(alpha0_max) || alpha0_max <= 0.0) throw ConfigError("alpha0 upper bound must be finite and positive");
  if (n_initial < q + 2) throw ConfigError("n_initial must be at least q + 2");
  if (n_sequential < 0) throw ConfigError("n_sequential must be >= 0");
  if (n_candidates < 1 || n_polish < 0) throw ConfigError("invalid candidate settings");
}

Eigen::MatrixXd lhs_design(const SearchSpace& space, std::uint64_t seed) {
  space.validate();
  return latin_hypercube(space.n_initial, space.lower(), space.upper(), seed);
}

double ridge_loss(const Eigen::VectorXd& point, const LossEstimate& raw) {
  return raw.mean + kRidgePenalty * point.squaredNorm();
}

namespace {

// Coordinate pattern search maximizing `f` inside [lo, hi].
Eigen::VectorXd pattern_polish(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                               double& fx, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd step = 0.05 * (hi - lo);
  const Eigen::VectorXd min_step = 1e-5 * (hi - lo);
  int budget = 600;
  while (budget > 0 && (step.array() > min_step.array()).any()) {
    bool improved = false;
    for (Eigen::Index k = 0; k < x.size() && budget > 0; ++k) {
      for (double dir : {1.0, -1.0}) {
        Eigen::VectorXd y = x;
        y(k) = std::clamp(x(k) + dir * step(k), lo(k), hi(k));
        if (y(k) == x(k)) continue;
        const double fy = f(y);
        --budget;
        if (fy > fx) {
          x = std::move(y);
          fx = fy;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return x;
}

}  // namespace

SearchResult minimize_expected_improvement(const SearchObjective& objective, const SearchSpace& space,
                                           std::uint64_t seed) {
  space.validate();
  const Index d = space.dimension();
  const Eigen::VectorXd lo = space.lower(), hi = space.upper();
  SearchResult result;

  auto record = [&](const Eigen::VectorXd& point, bool initial) {
    const int iter = static_cast<int>(result.trace.size());
    const Evaluation e = objective(point, iter);
    if (!std::isfinite(e.value)) throw NumericalError("policy search: objective returned a non-finite value");
    result.trace.push_back({iter, point, e.value, e.std_error, initial});
  };

  const Eigen::MatrixXd design = lhs_design(space, seed);
  for (Index i = 0; i < design.rows(); ++i) record(design.row(i).transpose(), true);

  Rng rng = make_rng(seed, 0xe1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd warm;
  for (int s = 0; s < space.n_sequential; ++s) {
    const Index m = static_cast<Index>(result.trace.size());
    Eigen::MatrixXd x(m, d);
    Eigen::VectorXd y(m);
    for (Index i = 0; i < m; ++i) {
      x.row(i) = result.trace[static_cast<std::size_t>(i)].point.transpose();
      y(i) = result.trace[static_cast<std::size_t>(i)].loss;
    }
    SurrogateOptions opts;
    opts.seed = derive_seed(seed, 0x5000 + static_cast<std::uint64_t>(s));
    opts.initial_log_params = warm;
    const Surrogate model = Surrogate::fit(x, y, lo, hi, opts);
    warm = model.log_params();
    const double f_min = y.minCoeff();
    auto ei = [&](const Eigen::VectorXd& p) { return expected_improvement(model, p, f_min); };

    std::vector<std::pair<double, Eigen::VectorXd>> cands;
    cands.reserve(static_cast<std::size_t>(space.n_candidates) + 1);
    for (int c = 0; c < space.n_candidates; ++c) {
      Eigen::VectorXd p(d);
      for (Index k = 0; k < d; ++k) p(k) = lo(k) + unif(rng) * (hi(k) - lo(k));
      cands.emplace_back(ei(p), std::move(p));
    }
    // the incumbent is always a polish start, so exploitation near the best point is possible
    const Index best_i = static_cast<Index>(std::min_element(y.data(), y.data() + m) - y.data());
    cands.emplace_back(ei(x.row(best_i).transpose()), x.row(best_i).transpose());
    const std::size_t n_top = std::min(cands.size(), static_cast<std::size_t>(std::max(space.n_polish, 1)));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n_top), cands.end() - 1,
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::swap(cands[n_top - 1], cands.back());

    double best_ei = -1.0;
    Eigen::VectorXd next = cands.front().second;
    for (std::size_t c = 0; c < n_top; ++c) {
      double fx = cands[c].first;
      Eigen::VectorXd p = pattern_polish(ei, cands[c].second, fx, lo, hi);
      if (fx > best_ei) {
        best_ei = fx;
        next = std::move(p);
      }
    }
    record(next, false);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i)
    if (result.trace[i].loss < result.trace[best].loss) best = i;
  result.best_index = static_cast<Index>(best);
  result.best_point = result.trace[best].point;
  result.best_loss = result.trace[best].loss;
  return result;
}

PolicySearchResult optimize_policy(const PosteriorDraws& draws, const PanelData& data, const RolloutConfig& cfg,
                                   const SearchSpace& space, UtilityKind kind, std::uint64_t seed) {
  space.validate();
  if (static_cast<Index>(cfg.factors.size()) != space.q)
    throw std::invalid_argument("optimize_policy: search dimension does not match the risk factor spec");
  const RolloutEngine engine = RolloutEngine::from_posterior(draws, data, cfg);
  auto to_policy = [&](const Eigen::VectorXd& point) {
    PolicyParams p;
    p.alpha0 = point(0);
    p.alpha = point.tail(space.q);
    p.kind = kind;
    return p;
  };
  const SearchObjective objective = [&](const Eigen::VectorXd& point, int iter) {
    const LossEstimate est = engine.estimate(to_policy(point), derive_seed(seed, 0x10000 + static_cast<std::uint64_t>(iter)));
    return Evaluation{ridge_loss(point, est), est.std_error};
  };
  PolicySearchResult out;
  out.search = minimize_expected_improvement(objective, space, seed);
  out.policy = to_policy(out.search.best_point);
  return out;
}

AlphaPosterior posterior_of_alpha(const PosteriorDraws& draws, const PanelData& data, const RolloutConfig& cfg,
                                  const SearchSpace& space, UtilityKind kind, std::uint64_t seed) {
  if (draws.draws.empty()) throw std::invalid_argument("posterior_of_alpha: no posterior draws");
  AlphaPosterior out;
  const Index k = static_cast<Index>(draws.draws.size());
  out.samples.resize(k, space.dimension());
  for (Index i = 0; i < k; ++i) {
    PosteriorDraws single;
    single.draws = {draws.draws[static_cast<std::size_t>(i)]};
    single.seed = draws.seed;
    const PolicySearchResult r = optimize_policy(single, data, cfg, space, kind, derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.samples.row(i) = r.search.best_point.transpose();
  }
  out.quantiles.resize(static_cast<Index>(out.probs.size()), space.dimension());
  for (Index c = 0; c < space.dimension(); ++c) {
    std::vector<double> col(out.samples.col(c).data(), out.samples.col(c).data() + k);
    for (std::size_t j = 0; j < out.probs.size(); ++j)
      out.quantiles(static_cast<Index>(j), c) = sample_quantile(col, out.probs[j]);
  }
  return out;
}

}  // namespace netalloc
