#include "netalloc/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "netalloc/errors.hpp"
#include "netalloc/random.hpp"

namespace netalloc {

double matern52(double r) {
  const double s = std::sqrt(5.0) * r;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             double step, int max_evaluations, double tolerance) {
  const Eigen::Index d = x0.size();
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(d + 1));
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  };
  for (Eigen::Index k = 0; k < d; ++k) pts[static_cast<std::size_t>(k + 1)](k) += step;
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(pts.size());
  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(vals[worst] - vals[best]) <= tolerance * (std::abs(vals[best]) + tolerance)) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = eval(reflected);
    if (fr < vals[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  return {pts[static_cast<std::size_t>(it - vals.begin())], *it, evals};
}

namespace {

struct Merged {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd values;
};

Merged merge_duplicates(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::map<std::vector<double>, std::pair<double, int>> groups;
  std::vector<std::vector<double>> first_seen;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> key(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index k = 0; k < x.cols(); ++k) key[static_cast<std::size_t>(k)] = x(i, k);
    auto [it, inserted] = groups.try_emplace(key, 0.0, 0);
    it->second.first += y(i);
    it->second.second += 1;
    if (inserted) first_seen.push_back(key);
  }
  Merged out;
  out.inputs.resize(static_cast<Eigen::Index>(first_seen.size()), x.cols());
  out.values.resize(static_cast<Eigen::Index>(first_seen.size()));
  for (std::size_t i = 0; i < first_seen.size(); ++i) {
    const auto& g = groups.at(first_seen[i]);
    for (Eigen::Index k = 0; k < x.cols(); ++k) out.inputs(static_cast<Eigen::Index>(i), k) = first_seen[i][static_cast<std::size_t>(k)];
    out.values(static_cast<Eigen::Index>(i)) = g.first / g.second;
  }
  return out;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& unit, const Eigen::VectorXd& ls, double nugget) {
  const Eigen::Index m = unit.rows();
  const Eigen::MatrixXd scaled = unit.array().rowwise() / ls.transpose().array();
  Eigen::MatrixXd r(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    r(i, i) = 1.0 + nugget;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = matern52((scaled.row(i) - scaled.row(j)).norm());
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

struct Profile {
  double neg_log_lik = std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double variance = 0.0;
};

Profile profile_likelihood(const Eigen::MatrixXd& unit, const Eigen::VectorXd& y, const Eigen::VectorXd& ls,
                           double nugget) {
  const Eigen::Index m = unit.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(correlation_matrix(unit, ls, nugget));
  Profile p;
  if (llt.info() != Eigen::Success) return p;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
  const Eigen::VectorXd ri1 = llt.solve(ones);
  const Eigen::VectorXd riy = llt.solve(y);
  p.mean = ones.dot(riy) / ones.dot(ri1);
  const Eigen::VectorXd resid = y - p.mean * ones;
  p.variance = std::max(resid.dot(llt.solve(resid)) / static_cast<double>(m), 1e-300);
  double logdet = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < m; ++i) logdet += 2.0 * std::log(l(i, i));
  p.neg_log_lik = 0.5 * static_cast<double>(m) * std::log(p.variance) + 0.5 * logdet;
  return p;
}

}  // namespace

Eigen::VectorXd Surrogate::to_unit(const Eigen::VectorXd& x) const {
  return ((x - lower_).array() / width_.array()).matrix();
}

Eigen::VectorXd Surrogate::cross_correlation(const Eigen::VectorXd& u) const {
  Eigen::VectorXd r(unit_.rows());
  for (Eigen::Index i = 0; i < unit_.rows(); ++i)
    r(i) = matern52(((unit_.row(i).transpose() - u).array() / lengthscales_.array()).matrix().norm());
  return r;
}

Eigen::VectorXd Surrogate::log_params() const {
  Eigen::VectorXd out(lengthscales_.size() + 1);
  out.head(lengthscales_.size()) = lengthscales_.array().log().matrix();
  out(lengthscales_.size()) = std::log(nugget_ratio_);
  return out;
}

Surrogate Surrogate::fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& values, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, const SurrogateOptions& options) {
  const Eigen::Index d = inputs.cols();
  if (values.size() != inputs.rows()) throw std::invalid_argument("fit_surrogate: input/value count mismatch");
  if (lower.size() != d || upper.size() != d) throw std::invalid_argument("fit_surrogate: bound dimension mismatch");
  if (((upper - lower).array() <= 0.0).any()) throw std::invalid_argument("fit_surrogate: empty bound range");
  if (!inputs.allFinite() || !values.allFinite()) throw DataError("fit_surrogate: non-finite training data");

  Surrogate s;
  s.lower_ = lower;
  s.width_ = upper - lower;
  Merged merged = merge_duplicates(inputs, values);
  if (merged.inputs.rows() < d + 1)
    throw std::invalid_argument("fit_surrogate: need at least d + 1 distinct training points");
  s.inputs_ = std::move(merged.inputs);
  s.values_ = std::move(merged.values);
  s.unit_ = (s.inputs_.rowwise() - lower.transpose()).array().rowwise() / s.width_.transpose().array();
  const Eigen::Index m = s.unit_.rows();

  const double lo_ls = std::log(options.min_lengthscale), hi_ls = std::log(options.max_lengthscale);
  const double lo_g = std::log(options.min_nugget), hi_g = 0.0;
  auto decode = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& ls, double& g) {
    double excess = 0.0;
    ls.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double c = std::clamp(theta(k), lo_ls, hi_ls);
      excess += (theta(k) - c) * (theta(k) - c);
      ls(k) = std::exp(c);
    }
    const double cg = std::clamp(theta(d), lo_g, hi_g);
    excess += (theta(d) - cg) * (theta(d) - cg);
    g = std::exp(cg);
    return excess;
  };

  const double spread = s.values_.maxCoeff() - s.values_.minCoeff();
  const double scale = std::max(std::abs(s.values_.mean()), 1.0);
  Eigen::VectorXd best_theta(d + 1);
  if (spread <= 1e-14 * scale) {
    best_theta.head(d).setConstant(std::log(0.5));
    best_theta(d) = lo_g;
  } else {
    auto objective = [&](const Eigen::VectorXd& theta) {
      Eigen::VectorXd ls;
      double g = 0.0;
      const double excess = decode(theta, ls, g);
      return profile_likelihood(s.unit_, s.values_, ls, g).neg_log_lik + 1e3 * excess;
    };
    Rng rng = make_rng(options.seed, 0x6f17);
    std::uniform_real_distribution<double> u_ls(std::log(0.05), std::log(2.0));
    std::uniform_real_distribution<double> u_g(lo_g, std::log(1e-2));
    double best_value = std::numeric_limits<double>::infinity();
    for (int start = 0; start < std::max(options.n_starts, 1); ++start) {
      Eigen::VectorXd theta0(d + 1);
      if (start == 0 && options.initial_log_params.size() == d + 1) {
        theta0 = options.initial_log_params;
      } else if (start == 0) {
        theta0.head(d).setConstant(std::log(0.3));
        theta0(d) = std::log(1e-6);
      } else {
        for (Eigen::Index k = 0; k < d; ++k) theta0(k) = u_ls(rng);
        theta0(d) = u_g(rng);
      }
      const NelderMeadResult res = nelder_mead(objective, theta0, 0.5, options.max_evaluations);
      if (res.value < best_value) {
        best_value = res.value;
        best_theta = res.x;
      }
    }
  }

  double g = 0.0;
  decode(best_theta, s.lengthscales_, g);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
  for (;;) {
    s.chol_.compute(correlation_matrix(s.unit_, s.lengthscales_, g));
    if (s.chol_.info() == Eigen::Success) break;
    g *= 10.0;
    if (g > 1.0) throw NumericalError("fit_surrogate: kernel matrix is not positive definite after nugget escalation");
  }
  s.nugget_ratio_ = g;
  s.rinv_ones_ = s.chol_.solve(ones);
  s.ones_rinv_ones_ = ones.dot(s.rinv_ones_);
  s.mean_ = ones.dot(s.chol_.solve(s.values_)) / s.ones_rinv_ones_;
  const Eigen::VectorXd resid = s.values_ - s.mean_ * ones;
  s.weights_ = s.chol_.solve(resid);
  s.signal_variance_ = spread <= 1e-14 * scale ? 0.0 : resid.dot(s.weights_) / static_cast<double>(m);
  const Profile p = profile_likelihood(s.unit_, s.values_, s.lengthscales_, g);
  s.log_likelihood_ = -p.neg_log_lik - 0.5 * static_cast<double>(m) * (1.0 + std::log(2.0 * M_PI));
  return s;
}

Prediction Surrogate::predict(const Eigen::VectorXd& x) const {
  if (x.size() != unit_.cols()) throw std::invalid_argument("Surrogate::predict: dimension mismatch");
  const Eigen::VectorXd r = cross_correlation(to_unit(x));
  Prediction out;
  out.mean = mean_ + r.dot(weights_);
  const Eigen::VectorXd v = chol_.matrixL().solve(r);
  const double u = 1.0 - rinv_ones_.dot(r);
  const double var = signal_variance_ * (1.0 - v.squaredNorm() + u * u / ones_rinv_ones_);
  out.variance = std::max(var, 0.0);
  return out;
}

double expected_improvement(double mean, double sd, double f_min) {
  const double gap = f_min - mean;
  if (!(sd > 0.0)) return std::max(gap, 0.0);
  const double z = gap / sd;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return std::max(gap * cdf + sd * pdf, 0.0);
}

double expected_improvement(const Surrogate& surrogate, const Eigen::VectorXd& x, double f_min) {
  const Prediction p = surrogate.predict(x);
  return expected_improvement(p.mean, std::sqrt(p.variance), f_min);
}

}  // namespace netalloc
