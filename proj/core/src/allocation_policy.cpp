#include "netalloc/allocation_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/SparseCholesky>

#include "netalloc/disease_dynamics.hpp"
#include "netalloc/errors.hpp"

namespace netalloc {

std::string to_string(UtilityKind kind) {
  return kind == UtilityKind::linear ? "linear" : "quadratic";
}

UtilityKind parse_utility_kind(const std::string& text) {
  if (text == "linear") return UtilityKind::linear;
  if (text == "quadratic" || text == "quad") return UtilityKind::quadratic;
  throw ConfigError("unknown utility kind '" + text + "'");
}

void PolicyParams::validate() const {
  if (!(alpha0 >= 0.0) || !std::isfinite(alpha0)) throw std::domain_error("alpha0 must be >= 0");
  if (!alpha.allFinite()) throw std::domain_error("policy weights must be finite");
}

Eigen::VectorXd priority_scores(const RiskFactors& factors, const Eigen::VectorXd& alpha) {
  if (factors.values.cols() != alpha.size())
    throw std::invalid_argument("priority_scores: factor count does not match weight count");
  return inv_logit(Eigen::VectorXd(factors.values * alpha));
}

double local_utility(double a, double p, UtilityKind kind) {
  if (!(a >= 0.0 && a <= 1.0)) throw std::domain_error("local_utility: allocation outside [0, 1]");
  if (kind == UtilityKind::linear) return a * p;
  return p * a * (2.0 - a);
}

double global_utility(const Eigen::VectorXd& a, const Eigen::VectorXd& scores, double alpha0,
                      const ZoneGraph& graph, UtilityKind kind) {
  const Index n = graph.size();
  if (a.size() != n || scores.size() != n) throw std::invalid_argument("global_utility: dimension mismatch");
  if (alpha0 < 0.0) throw std::domain_error("global_utility: alpha0 must be >= 0");
  double total = 0.0;
  for (Index l = 0; l < n; ++l) total += local_utility(a(l), scores(l), kind);
  double penalty = 0.0;
  for (const auto& [i, j] : graph.edges()) penalty += (a(i) - a(j)) * (a(i) - a(j));
  return total - alpha0 * penalty;
}

double Allocation::budget_used(const ZoneGraph& graph) const {
  return graph.population_weights().dot(coverage);
}

Eigen::VectorXd project_box_budget(const Eigen::VectorXd& y, const Eigen::VectorXd& upper,
                                   const Eigen::VectorXd& weights, double budget) {
  const Index n = y.size();
  Eigen::VectorXd x(n);
  double used = 0.0;
  for (Index l = 0; l < n; ++l) {
    x(l) = std::clamp(y(l), 0.0, upper(l));
    used += weights(l) * x(l);
  }
  if (used <= budget) return x;

  // phi(mu) = sum_l w_l clamp(y_l - mu w_l, 0, u_l) is piecewise linear and
  // decreasing; walk its breakpoints to find phi(mu) = budget.
  struct Event {
    double mu;
    double slope_change;
  };
  std::vector<Event> events;
  events.reserve(2 * static_cast<std::size_t>(n));
  double value = 0.0;  // phi(0)
  double slope = 0.0;
  for (Index l = 0; l < n; ++l) {
    const double w = weights(l);
    const double u = upper(l);
    if (u <= 0.0 || y(l) <= 0.0) continue;
    const double enter = (y(l) - u) / w;  // leaves the upper bound
    const double leave = y(l) / w;        // reaches zero
    if (enter > 0.0) {
      value += w * u;
      events.push_back({enter, -w * w});
    } else {
      value += w * y(l);
      slope -= w * w;
    }
    events.push_back({leave, w * w});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.mu < b.mu; });

  double mu = 0.0;
  double segment_end = std::numeric_limits<double>::infinity();
  for (const Event& e : events) {
    const double next_value = value + slope * (e.mu - mu);
    if (next_value <= budget) {
      segment_end = e.mu;
      break;
    }
    value = next_value;
    mu = e.mu;
    slope += e.slope_change;
  }
  // The accumulated slope of a flat segment is roundoff, not zero; keep the
  // root inside the bracketing segment.
  if (slope < 0.0) mu = std::clamp(mu + (budget - value) / slope, mu, segment_end);

  for (Index l = 0; l < n; ++l) x(l) = std::clamp(y(l) - mu * weights(l), 0.0, upper(l));
  return x;
}

namespace {

struct QpProblem {
  const ZoneGraph& graph;
  UtilityKind kind;
  double alpha0;
  Eigen::VectorXd scores;
  Eigen::VectorXd upper;
  Eigen::VectorXd weights;
  double budget;

  // Minimization form: f(a) = 0.5 a'Ha - g'a.
  Eigen::VectorXd gradient(const Eigen::VectorXd& a) const {
    const Index n = a.size();
    Eigen::VectorXd grad(n);
    for (Index i = 0; i < n; ++i) {
      double lap = static_cast<double>(graph.degree(i)) * a(i);
      for (Index j : graph.neighbors(i)) lap -= a(j);
      double gi = 2.0 * alpha0 * lap;
      if (kind == UtilityKind::quadratic) gi += 2.0 * scores(i) * a(i) - 2.0 * scores(i);
      else gi -= scores(i);
      grad(i) = gi;
    }
    return grad;
  }

  double objective(const Eigen::VectorXd& a) const {
    double f = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
      for (Index j : graph.neighbors(i))
        if (j > i) f += alpha0 * (a(i) - a(j)) * (a(i) - a(j));
      f -= kind == UtilityKind::quadratic ? scores(i) * (2.0 * a(i) - a(i) * a(i)) : scores(i) * a(i);
    }
    return f;
  }

  double lipschitz() const {
    double bound = 0.0;
    for (Index i = 0; i < graph.size(); ++i) {
      double b = 4.0 * alpha0 * static_cast<double>(graph.degree(i));
      if (kind == UtilityKind::quadratic) b += 2.0 * scores(i);
      bound = std::max(bound, b);
    }
    return std::max(bound, 1e-12);
  }

  Eigen::VectorXd project(const Eigen::VectorXd& y) const {
    return project_box_budget(y, upper, weights, budget);
  }
};

struct KktReport {
  double residual = 0.0;
  double multiplier = 0.0;
};

// Components this close to a bound are treated as sitting on it.
constexpr double kBoundTol = 1e-12;

// Largest violation of primal feasibility, stationarity, and dual sign
// conditions, with the budget multiplier chosen to minimize it.
KktReport kkt_report(const QpProblem& qp, const Eigen::VectorXd& a) {
  const Index n = a.size();
  const Eigen::VectorXd grad = qp.gradient(a);
  double primal = 0.0;
  for (Index l = 0; l < n; ++l) {
    primal = std::max(primal, -a(l));
    primal = std::max(primal, a(l) - qp.upper(l));
  }
  const double used = qp.weights.dot(a);
  primal = std::max(primal, used - qp.budget);
  const bool budget_active = qp.budget - used <= 1e-9;

  double lambda = 0.0;
  if (budget_active) {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    double free_w = 0.0;
    for (Index l = 0; l < n; ++l) {
      const double r = -grad(l) / qp.weights(l);
      if (qp.upper(l) <= 0.0) continue;
      if (a(l) <= kBoundTol) lo = std::max(lo, r);
      else if (a(l) >= qp.upper(l) - kBoundTol) hi = std::min(hi, r);
      else {
        free_sum += r * qp.weights(l) * qp.weights(l);
        free_w += qp.weights(l) * qp.weights(l);
      }
    }
    if (free_w > 0.0) lambda = std::max(0.0, free_sum / free_w);
    else if (hi >= lo) lambda = lo;
    else lambda = std::max(0.0, 0.5 * (lo + hi));
  }

  double dual = 0.0;
  for (Index l = 0; l < n; ++l) {
    if (qp.upper(l) <= 0.0) continue;  // fixed at zero, no sign condition
    const double s = grad(l) + lambda * qp.weights(l);
    if (a(l) <= kBoundTol) dual = std::max(dual, -s);
    else if (a(l) >= qp.upper(l) - kBoundTol) dual = std::max(dual, s);
    else dual = std::max(dual, std::abs(s));
  }
  return {std::max(primal, dual), lambda};
}

// Solves the equality-constrained QP on the free set implied by `a`.
std::optional<Eigen::VectorXd> polish(const QpProblem& qp, const Eigen::VectorXd& a) {
  const Index n = a.size();
  std::vector<Index> free;
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n);
  for (Index l = 0; l < n; ++l) {
    if (qp.upper(l) > 0.0 && a(l) > kBoundTol && a(l) < qp.upper(l) - kBoundTol) free.push_back(l);
    else fixed(l) = a(l) >= qp.upper(l) - kBoundTol ? qp.upper(l) : 0.0;
  }
  if (free.empty()) return fixed;
  const bool budget_active = qp.budget - qp.weights.dot(a) <= 1e-9;

  const auto f = static_cast<Index>(free.size());
  std::vector<Index> pos(n, -1);
  for (Index k = 0; k < f; ++k) pos[free[k]] = k;

  // rhs_F = g_F - H_FB a_B, since gradient(fixed) = H a_B - g.
  const Eigen::VectorXd grad_fixed = qp.gradient(fixed);
  Eigen::VectorXd rhs(f), w(f);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(5 * f));
  for (Index k = 0; k < f; ++k) {
    const Index i = free[k];
    double diag = 2.0 * qp.alpha0 * static_cast<double>(qp.graph.degree(i));
    if (qp.kind == UtilityKind::quadratic) diag += 2.0 * qp.scores(i);
    trips.emplace_back(k, k, diag);
    for (Index j : qp.graph.neighbors(i))
      if (pos[j] >= 0) trips.emplace_back(k, pos[j], -2.0 * qp.alpha0);
    rhs(k) = -grad_fixed(i);
    w(k) = qp.weights(i);
  }
  const double remaining = qp.budget - qp.weights.dot(fixed);

  // H_FF is sparse SPD unless a free component has no fixed neighbor under
  // the linear utility; then fall back to a dense pivoted solve.
  Eigen::VectorXd sol;
  SparseMatrix hff(f, f);
  hff.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(hff);
  const bool definite = ldlt.info() == Eigen::Success &&
                        ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff());
  if (definite) {
    sol = ldlt.solve(rhs);
    if (budget_active) {
      const Eigen::VectorXd v = ldlt.solve(w);
      const double denom = w.dot(v);
      if (!(denom > 0.0)) return std::nullopt;
      sol -= ((w.dot(sol) - remaining) / denom) * v;
    }
  } else {
    const Index dim = f + (budget_active ? 1 : 0);
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
    kkt.topLeftCorner(f, f) = Eigen::MatrixXd(hff);
    Eigen::VectorXd full_rhs(dim);
    full_rhs.head(f) = rhs;
    if (budget_active) {
      kkt.col(f).head(f) = w;
      kkt.row(f).head(f) = w.transpose();
      full_rhs(f) = remaining;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) return std::nullopt;
    sol = lu.solve(full_rhs).head(f);
  }
  if (!sol.allFinite()) return std::nullopt;
  Eigen::VectorXd out = fixed;
  for (Index k = 0; k < f; ++k) {
    const double v = sol(k);
    if (v < -1e-12 || v > qp.upper(free[k]) + 1e-12) return std::nullopt;
    out(free[k]) = std::clamp(v, 0.0, qp.upper(free[k]));
  }
  return out;
}

Eigen::VectorXd greedy_fill(const QpProblem& qp) {
  const Index n = qp.scores.size();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return qp.scores(a) / qp.weights(a) > qp.scores(b) / qp.weights(b);
  });
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  double remaining = qp.budget;
  for (Index l : order) {
    if (qp.upper(l) <= 0.0) continue;
    if (remaining <= 0.0) break;
    const double take = std::min(qp.upper(l), remaining / qp.weights(l));
    a(l) = take;
    remaining -= take * qp.weights(l);
  }
  return a;
}

// a_l = max(0, 1 - lambda w_l / (2 p_l)) with lambda balancing the budget.
Eigen::VectorXd water_fill(const QpProblem& qp, double& lambda) {
  const Index n = qp.scores.size();
  lambda = 0.0;
  std::vector<Index> eligible;
  double total = 0.0;
  for (Index l = 0; l < n; ++l) {
    if (qp.upper(l) > 0.0) {
      eligible.push_back(l);
      total += qp.weights(l);
    }
  }
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  if (total <= qp.budget) {
    for (Index l : eligible) a(l) = 1.0;
    return a;
  }
  const auto ratio = [&](Index l) { return qp.weights(l) / (2.0 * qp.scores(l)); };
  std::stable_sort(eligible.begin(), eligible.end(), [&](Index x, Index y) { return ratio(x) < ratio(y); });
  double sum_w = 0.0;
  double sum_wr = 0.0;
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    const Index l = eligible[k];
    sum_w += qp.weights(l);
    sum_wr += qp.weights(l) * ratio(l);
    const double lam = (sum_w - qp.budget) / sum_wr;
    if (lam <= 0.0 || lam * ratio(l) >= 1.0) continue;
    if (k + 1 < eligible.size() && lam * ratio(eligible[k + 1]) < 1.0) continue;
    lambda = lam;
    break;
  }
  for (Index l : eligible) a(l) = std::max(0.0, 1.0 - lambda * ratio(l));
  return a;
}

}  // namespace

Allocation allocate(const Eigen::VectorXd& scores, const PolicyParams& params, const ZoneGraph& graph,
                    double budget, const std::optional<ZeroFloor>& zero_floor,
                    const AllocateOptions& options) {
  const Index n = graph.size();
  if (scores.size() != n) throw std::invalid_argument("allocate: score vector has wrong length");
  if (!(budget >= 0.0 && budget <= 1.0)) throw std::domain_error("allocate: budget must lie in [0, 1]");
  params.validate();
  for (Index l = 0; l < n; ++l)
    if (!(scores(l) > 0.0 && scores(l) <= 1.0))
      throw std::domain_error("allocate: priority scores must lie in (0, 1]");

  QpProblem qp{graph, params.kind, params.alpha0, scores, Eigen::VectorXd::Ones(n),
               graph.population_weights(), budget};
  if (zero_floor) {
    if (zero_floor->prevalence.size() != n) throw std::invalid_argument("allocate: zero floor prevalence length");
    for (Index l = 0; l < n; ++l)
      if (zero_floor->prevalence(l) < zero_floor->threshold) qp.upper(l) = 0.0;
  }

  Allocation out;
  out.budget = budget;

  const auto finish = [&](Eigen::VectorXd a, SolverPath path, int iterations) {
    const KktReport report = kkt_report(qp, a);
    out.coverage = std::move(a);
    out.path = path;
    out.iterations = iterations;
    out.kkt_residual = report.residual;
    out.budget_multiplier = report.multiplier;
    return out;
  };

  if (params.alpha0 == 0.0) {
    if (params.kind == UtilityKind::linear) return finish(greedy_fill(qp), SolverPath::greedy, 0);
    double lambda = 0.0;
    Eigen::VectorXd a = water_fill(qp, lambda);
    return finish(std::move(a), SolverPath::water_filling, 0);
  }

  // Warm start from the unpenalized solution.
  Eigen::VectorXd x;
  if (params.kind == UtilityKind::linear) {
    x = greedy_fill(qp);
  } else {
    double lambda = 0.0;
    x = water_fill(qp, lambda);
  }
  const double step = 1.0 / qp.lipschitz();
  Eigen::VectorXd y = x;
  double t = 1.0;
  double f_x = qp.objective(x);

  std::vector<signed char> signature(n, 0);
  std::vector<signed char> last_tried;
  int stable = 0;

  const auto state_of = [&](const Eigen::VectorXd& a, Index l) -> signed char {
    if (a(l) <= kBoundTol) return 0;
    if (a(l) >= qp.upper(l) - kBoundTol) return 2;
    return 1;
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd x_new = qp.project(y - step * qp.gradient(y));
    const double change = (x_new - x).lpNorm<Eigen::Infinity>();
    const double f_new = qp.objective(x_new);

    // Gradient- or value-based restart of the momentum.
    if ((y - x_new).dot(x_new - x) > 0.0 || f_new > f_x) {
      t = 1.0;
      y = x_new;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_new + ((t - 1.0) / t_next) * (x_new - x);
      t = t_next;
    }
    x = x_new;
    f_x = f_new;

    bool same = true;
    for (Index l = 0; l < n; ++l) {
      const signed char s = state_of(x, l);
      if (s != signature[l]) {
        same = false;
        signature[l] = s;
      }
    }
    stable = same ? stable + 1 : 0;

    if (stable >= 3 && signature != last_tried) {
      last_tried = signature;
      if (auto polished = polish(qp, x)) {
        if (kkt_report(qp, *polished).residual <= 1e-9)
          return finish(std::move(*polished), SolverPath::projected_gradient, iter);
      }
    }
    // Certificate check on the raw iterate; the odd period cannot lock onto
    // one phase of a two-cycle.
    if (iter % 5 == 0 && kkt_report(qp, x).residual <= 1e-9)
      return finish(std::move(x), SolverPath::projected_gradient, iter);
    if (change < options.step_tolerance) {
      if (auto polished = polish(qp, x)) {
        if (kkt_report(qp, *polished).residual <= 1e-9)
          return finish(std::move(*polished), SolverPath::projected_gradient, iter);
      }
      return finish(std::move(x), SolverPath::projected_gradient, iter);
    }
  }
  const KktReport report = kkt_report(qp, x);
  throw NumericalError("allocate: projected gradient did not converge in " +
                       std::to_string(options.max_iterations) + " iterations (KKT residual " +
                       std::to_string(report.residual) + ")");
}

Allocation baseline_highest_rate(const Eigen::VectorXd& current_rates, const ZoneGraph& graph,
                                 double budget) {
  const Index n = graph.size();
  if (current_rates.size() != n) throw std::invalid_argument("highest_rate: rate vector has wrong length");
  if (!(budget >= 0.0 && budget <= 1.0)) throw std::domain_error("highest_rate: budget must lie in [0, 1]");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return current_rates(a) > current_rates(b); });
  const Eigen::VectorXd w = graph.population_weights();
  Allocation out;
  out.budget = budget;
  out.coverage = Eigen::VectorXd::Zero(n);
  double used = 0.0;
  for (Index l : order) {
    if (used + w(l) > budget + 1e-12) break;
    used += w(l);
    out.coverage(l) = 1.0;
  }
  return out;
}

Allocation baseline_even(const ZoneGraph& graph, double budget) {
  if (!(budget >= 0.0 && budget <= 1.0)) throw std::domain_error("even: budget must lie in [0, 1]");
  Allocation out;
  out.budget = budget;
  out.coverage = Eigen::VectorXd::Constant(graph.size(), budget);
  return out;
}

}  // namespace netalloc
