#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

namespace netalloc {

struct SurrogateOptions {
  int n_starts = 4;           // likelihood restarts (the first uses `initial_log_params` if given)
  int max_evaluations = 400;  // Nelder-Mead budget per start
  double min_nugget = 1e-8;   // lower bound on the nugget-to-signal ratio
  double min_lengthscale = 0.02;
  double max_lengthscale = 20.0;
  std::uint64_t seed = 0;
  /// Warm start: log lengthscales followed by log nugget ratio.
  Eigen::VectorXd initial_log_params;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;  // of the latent function, excluding the nugget
};

/// Ordinary kriging with an anisotropic Matern-5/2 kernel on inputs rescaled
/// to the unit cube. The constant mean and signal variance are profiled out;
/// lengthscales and the nugget ratio maximize the concentrated likelihood.
class Surrogate {
 public:
  /// Duplicate rows are merged by averaging their values. Throws
  /// std::invalid_argument for fewer than d + 1 distinct points and
  /// NumericalError if the kernel stays singular after nugget escalation.
  static Surrogate fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& values, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const SurrogateOptions& options = {});

  Prediction predict(const Eigen::VectorXd& x) const;

  const Eigen::VectorXd& lengthscales() const { return lengthscales_; }  // unit-cube scale
  double signal_variance() const { return signal_variance_; }
  /// Absolute nugget variance (ratio times signal variance).
  double nugget() const { return nugget_ratio_ * signal_variance_; }
  double nugget_ratio() const { return nugget_ratio_; }
  double mean_level() const { return mean_; }
  double log_likelihood() const { return log_likelihood_; }
  /// Fitted log lengthscales and log nugget ratio, usable as a warm start.
  Eigen::VectorXd log_params() const;

  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& values() const { return values_; }

 private:
  Eigen::VectorXd to_unit(const Eigen::VectorXd& x) const;
  Eigen::VectorXd cross_correlation(const Eigen::VectorXd& unit_x) const;

  Eigen::VectorXd lower_, width_;
  Eigen::MatrixXd inputs_;   // merged, original scale
  Eigen::MatrixXd unit_;     // merged, unit cube
  Eigen::VectorXd values_;
  Eigen::VectorXd lengthscales_;
  double nugget_ratio_ = 1e-8;
  double signal_variance_ = 0.0;
  double mean_ = 0.0;
  double log_likelihood_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd weights_;      // R^{-1} (y - mean)
  Eigen::VectorXd rinv_ones_;    // R^{-1} 1
  double ones_rinv_ones_ = 1.0;
};

/// Matern-5/2 correlation at scaled distance r.
double matern52(double r);

/// (f_min - mu) Phi(z) + sd phi(z), z = (f_min - mu) / sd; max(f_min - mu, 0) when sd == 0.
double expected_improvement(double mean, double sd, double f_min);
double expected_improvement(const Surrogate& surrogate, const Eigen::VectorXd& x, double f_min);

/// Derivative-free simplex minimizer used for the likelihood fit.
struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
};
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             double step, int max_evaluations, double tolerance = 1e-8);

}  // namespace netalloc
