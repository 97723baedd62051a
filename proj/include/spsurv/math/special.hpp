#pragma once

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace spsurv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Floor for probabilities/likelihood values before taking logs.
inline constexpr double kTinyProb = 1e-300;
inline constexpr double kLogTiny = -690.775527898213705;  // log(1e-300)

inline double norm_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

inline double norm_logpdf(double x) {
  return -0.9189385332046727418 - 0.5 * x * x;
}

inline double norm_cdf(double x) {
  return 0.5 * boost::math::erfc(-x * 0.7071067811865475244);
}

// Upper tail P(Z > x), accurate for large x.
inline double norm_sf(double x) {
  return 0.5 * boost::math::erfc(x * 0.7071067811865475244);
}

inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw std::domain_error("norm_quantile: p outside [0,1]");
  }
  return -1.4142135623730950488 * boost::math::erfc_inv(2.0 * p);
}

inline double log_norm_cdf(double x) {
  if (x > -8.0) return std::log(norm_cdf(x));
  // Asymptotic tail, avoids log(0).
  return norm_logpdf(x) - std::log(-x) + std::log1p(-1.0 / (x * x));
}

// log(1 - exp(x)) for x < 0, stable near both ends.
inline double log1mexp(double x) {
  if (x >= 0.0) {
    if (x == 0.0) return -kInf;
    throw std::domain_error("log1mexp: argument must be <= 0");
  }
  return (x > -0.6931471805599453094) ? std::log(-std::expm1(x))
                                      : std::log1p(-std::exp(x));
}

inline double logsumexp(const std::vector<double>& v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double lgamma_fn(double x) { return boost::math::lgamma(x); }

// Regularized incomplete beta I_x(a,b) and the Beta(a,b) pdf.
inline double beta_cdf(double x, double a, double b) {
  return boost::math::ibeta(a, b, x);
}

inline double beta_pdf(double x, double a, double b) {
  return boost::math::ibeta_derivative(a, b, x);
}

// Binomial-tail evaluation of the Beta(j, L-j+1) cdf/pdf family at one x:
//   BetaCDF(x; j, L-j+1) = P(Bin(L, x) >= j),
//   BetaPDF(x; j, L-j+1) = L * BinPdf(j-1; L-1, x).
// Fills cdf[j-1], pdf[j-1] for j = 1..L in O(L); terms are computed in
// log space so the deep tails keep relative accuracy.
struct BetaBasisTables {
  int L = 0;
  std::vector<double> lchoose_L;    // log C(L, i),   i = 0..L
  std::vector<double> lchoose_Lm1;  // log C(L-1, i), i = 0..L-1

  explicit BetaBasisTables(int L_) : L(L_) {
    lchoose_L.resize(L + 1);
    lchoose_Lm1.resize(L);
    const double lgL1 = lgamma_fn(L + 1.0);
    const double lgL = lgamma_fn(L + 0.0);
    for (int i = 0; i <= L; ++i)
      lchoose_L[i] = lgL1 - lgamma_fn(i + 1.0) - lgamma_fn(L - i + 1.0);
    for (int i = 0; i < L; ++i)
      lchoose_Lm1[i] = lgL - lgamma_fn(i + 1.0) - lgamma_fn(L - i + 0.0);
  }

  void eval(double x, std::vector<double>& cdf, std::vector<double>& pdf) const {
    cdf.assign(L, 0.0);
    pdf.assign(L, 0.0);
    const double lx = std::log(x), l1x = std::log1p(-x);
    // pmf of Bin(L, x) at i, then suffix sums give the tails.
    double tail = 0.0;
    for (int j = L; j >= 1; --j) {
      tail += std::exp(lchoose_L[j] + j * lx + (L - j) * l1x);
      cdf[j - 1] = std::min(tail, 1.0);
      pdf[j - 1] = L * std::exp(lchoose_Lm1[j - 1] + (j - 1) * lx + (L - j) * l1x);
    }
  }
};

}  // namespace spsurv
