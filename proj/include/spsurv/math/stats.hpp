#pragma once

#include "spsurv/math/special.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample variance, n-1 denominator.
inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sd_of(const std::vector<double>& v) { return std::sqrt(var_of(v)); }

// Type-7 (linear interpolation) empirical quantile.
inline double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile_type7: empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

// Welford running mean/covariance over vector-valued samples.
// covariance() uses the n-1 denominator and matches the batch estimate.
class RunningMoments {
 public:
  explicit RunningMoments(int dim)
      : n_(0), mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {}

  void update(const Eigen::VectorXd& x) {
    ++n_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_).transpose();
  }

  long count() const { return n_; }
  const Eigen::VectorXd& mean() const { return mean_; }

  Eigen::MatrixXd covariance() const {
    if (n_ < 2) return Eigen::MatrixXd::Zero(mean_.size(), mean_.size());
    // m2_ accumulates delta * delta_new' which is not exactly symmetric in
    // floating point; symmetrize on the way out.
    Eigen::MatrixXd c = m2_ / static_cast<double>(n_ - 1);
    return 0.5 * (c + c.transpose());
  }

 private:
  long n_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

// log N_p(x; mean, cov), dense Cholesky.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov) {
  const int p = static_cast<int>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("mvn_logpdf: covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x - mean);
  double logdet = 0.0;
  for (int i = 0; i < p; ++i) logdet += std::log(L(i, i));
  return -0.5 * p * std::log(2.0 * M_PI) - logdet - 0.5 * z.squaredNorm();
}

// log N(x; mean, var) for scalars.
inline double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * d * d / var;
}

// log Gamma(x; shape a, rate b) density.
inline double gamma_logpdf(double x, double a, double b) {
  return a * std::log(b) - lgamma_fn(a) + (a - 1.0) * std::log(x) - b * x;
}

inline double posterior_sd(const std::vector<double>& draws) { return sd_of(draws); }

struct SummaryRow {
  double mean, median, sd, lo95, hi95;
};

inline SummaryRow summarize_draws(const std::vector<double>& draws) {
  SummaryRow r;
  r.mean = mean_of(draws);
  r.sd = draws.size() > 1 ? sd_of(draws) : 0.0;
  r.median = quantile_type7(draws, 0.5);
  r.lo95 = quantile_type7(draws, 0.025);
  r.hi95 = quantile_type7(draws, 0.975);
  return r;
}

}  // namespace spsurv
