#pragma once

#include "spsurv/math/special.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

// All stochastic code draws through this wrapper. Distributions are
// implemented explicitly (inverse-cdf normal, Marsaglia-Tsang gamma) so a
// seed reproduces the same stream regardless of the standard library's
// distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  // Uniform on (0,1), never returns 0 or 1.
  double uniform() {
    const double u = (gen_() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t raw() { return gen_(); }

  int uniform_int(int n) {  // 0..n-1
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

  double normal() { return norm_quantile(uniform()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Gamma(shape, rate) with mean shape/rate.
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
      throw std::domain_error("Rng::gamma: shape and rate must be positive");
    if (shape < 1.0) {
      // Boost shape via Gamma(shape+1) * U^(1/shape).
      const double g = gamma(shape + 1.0, 1.0);
      return g * std::pow(uniform(), 1.0 / shape) / rate;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  double chisq(double df) { return gamma(0.5 * df, 0.5); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // N(mean, sd^2) truncated to (lo, hi); inverse-cdf, robust in the tails
  // via the complementary form.
  double trunc_normal(double mean, double sd, double lo, double hi) {
    const double a = (lo - mean) / sd, b = (hi - mean) / sd;
    if (a > 0.0) {  // right tail: work with survival function
      const double sa = norm_sf(a), sb = std::isinf(b) ? 0.0 : norm_sf(b);
      const double s = sb + uniform() * (sa - sb);
      return mean - sd * norm_quantile(std::max(s, kTinyProb));
    }
    const double pa = std::isinf(a) ? 0.0 : norm_cdf(a);
    const double pb = std::isinf(b) ? 1.0 : norm_cdf(b);
    const double p = pa + uniform() * (pb - pa);
    return mean + sd * norm_quantile(std::min(std::max(p, kTinyProb), 1.0 - 1e-16));
  }

  Eigen::VectorXd normal_vec(int d) {
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = normal();
    return z;
  }

  // N(mean, cov) given the lower Cholesky factor of cov.
  Eigen::VectorXd mvn_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower) {
    return mean + chol_lower * normal_vec(static_cast<int>(mean.size()));
  }

  Eigen::VectorXd dirichlet(const Eigen::VectorXd& alpha) {
    Eigen::VectorXd g(alpha.size());
    for (int i = 0; i < alpha.size(); ++i) g[i] = gamma(alpha[i], 1.0);
    return g / g.sum();
  }

  // Wishart(df, scale) via Bartlett decomposition; scale passed as matrix.
  Eigen::MatrixXd wishart(double df, const Eigen::MatrixXd& scale) {
    const int p = static_cast<int>(scale.rows());
    Eigen::MatrixXd L = scale.llt().matrixL();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) {
      A(i, i) = std::sqrt(chisq(df - i));
      for (int j = 0; j < i; ++j) A(i, j) = normal();
    }
    Eigen::MatrixXd LA = L * A;
    return LA * LA.transpose();
  }

  int categorical(const std::vector<double>& probs) {
    double u = uniform();
    double acc = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int k = 0; k < n; ++k) {
      acc += probs[k];
      if (u <= acc) return k;
    }
    return n - 1;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace spsurv
