#pragma once

#include <Eigen/Core>
#include <vector>

namespace vflow::bo {

using Point = std::vector<double>;

struct KernelParams {
  double length_scale = 0.2;
  double signal_variance = 1.0;
};

struct Prediction {
  double mean = 0.0;
  double std = 0.0;
};

/// Zero-mean GP over standardized targets with an isotropic
/// squared-exponential kernel. Hyperparameters are picked from a fixed grid
/// by log marginal likelihood; there is no gradient-based fitting.
class GaussianProcess {
 public:
  static constexpr double kJitter = 1e-6;

  /// Needs at least two points. Throws numeric when no grid cell yields a
  /// positive-definite kernel matrix.
  static GaussianProcess fit(std::vector<Point> xs, std::vector<double> ys);

  /// Posterior in the caller's units.
  Prediction posterior(const Point& x) const;
  /// Posterior in standardized units (zero mean, unit variance targets).
  Prediction posterior_standardized(const Point& x) const;

  const KernelParams& kernel() const { return kernel_; }
  double log_marginal_likelihood() const { return lml_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }
  double prior_std() const;
  std::size_t size() const { return xs_.size(); }

 private:
  double k(const Point& a, const Point& b) const;

  std::vector<Point> xs_;
  KernelParams kernel_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double lml_ = 0.0;
  Eigen::MatrixXd chol_;  // lower factor of K + jitter I
  Eigen::VectorXd alpha_;
};

double normal_pdf(double z);
double normal_cdf(double z);

/// EI for maximization: (mu - best - xi) Phi(z) + sigma phi(z).
double expected_improvement(double mean, double std, double best, double xi);

/// EI at x. The margin xi is in standardized units; the result is scaled
/// back into the caller's units.
double expected_improvement(const GaussianProcess& gp, const Point& x, double best_y,
                            double xi);

}  // namespace vflow::bo
