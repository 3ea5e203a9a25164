#include "gp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>

#include "error.hpp"

namespace vflow::bo {
namespace {

constexpr double kLengthScales[] = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
constexpr double kSignalVariances[] = {0.25, 1.0, 4.0};

double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

double GaussianProcess::k(const Point& a, const Point& b) const {
  return kernel_.signal_variance *
         std::exp(-0.5 * squared_distance(a, b) / (kernel_.length_scale * kernel_.length_scale));
}

GaussianProcess GaussianProcess::fit(std::vector<Point> xs, std::vector<double> ys) {
  if (xs.size() < 2 || xs.size() != ys.size()) {
    fail(ErrorKind::argument, "gp_fit: need at least two observations with matching targets");
  }
  const auto n = static_cast<Eigen::Index>(xs.size());
  GaussianProcess gp;
  gp.xs_ = std::move(xs);

  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= static_cast<double>(ys.size());
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  var /= static_cast<double>(ys.size());
  gp.y_mean_ = mean;
  gp.y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = (ys[static_cast<std::size_t>(i)] - gp.y_mean_) / gp.y_scale_;
  }

  double best_lml = -std::numeric_limits<double>::infinity();
  bool found = false;
  KernelParams best_kernel;
  for (double ls : kLengthScales) {
    for (double sv : kSignalVariances) {
      gp.kernel_ = {ls, sv};
      Eigen::MatrixXd kmat(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          kmat(i, j) = kmat(j, i) = gp.k(gp.xs_[static_cast<std::size_t>(i)],
                                         gp.xs_[static_cast<std::size_t>(j)]);
        }
        kmat(i, i) += kJitter;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(kmat);
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd a = llt.solve(y);
      const Eigen::MatrixXd l = llt.matrixL();
      const double lml = -0.5 * y.dot(a) - l.diagonal().array().log().sum() -
                         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
      if (!std::isfinite(lml) || lml <= best_lml) continue;
      best_lml = lml;
      found = true;
      best_kernel = gp.kernel_;
      gp.lml_ = lml;
      gp.chol_ = l;
      gp.alpha_ = a;
    }
  }
  if (!found) fail(ErrorKind::numeric, "gp_fit: kernel matrix is not positive definite");
  gp.kernel_ = best_kernel;
  return gp;
}

Prediction GaussianProcess::posterior_standardized(const Point& x) const {
  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::VectorXd kx(n);
  for (Eigen::Index i = 0; i < n; ++i) kx(i) = k(xs_[static_cast<std::size_t>(i)], x);
  const double mean = kx.dot(alpha_);
  const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(kx);
  const double var = kernel_.signal_variance - v.squaredNorm();
  return {mean, std::sqrt(std::max(var, 0.0))};
}

Prediction GaussianProcess::posterior(const Point& x) const {
  const Prediction p = posterior_standardized(x);
  return {y_mean_ + y_scale_ * p.mean, y_scale_ * p.std};
}

double GaussianProcess::prior_std() const {
  return y_scale_ * std::sqrt(kernel_.signal_variance);
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mean, double std, double best, double xi) {
  const double gain = mean - best - xi;
  if (!(std > 0.0)) return std::max(0.0, gain);
  const double z = gain / std;
  return std::max(0.0, gain * normal_cdf(z) + std * normal_pdf(z));
}

double expected_improvement(const GaussianProcess& gp, const Point& x, double best_y, double xi) {
  const Prediction p = gp.posterior_standardized(x);
  const double best = (best_y - gp.y_mean()) / gp.y_scale();
  return gp.y_scale() * expected_improvement(p.mean, p.std, best, xi);
}

}  // namespace vflow::bo
