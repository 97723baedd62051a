#pragma once

#include "spsurv/math/special.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

enum class Family { LogLogistic, LogNormal, Weibull };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::LogLogistic: return "loglogistic";
    case Family::LogNormal: return "lognormal";
    default: return "weibull";
  }
}

inline Family family_from_name(const std::string& s) {
  if (s == "loglogistic") return Family::LogLogistic;
  if (s == "lognormal") return Family::LogNormal;
  if (s == "weibull") return Family::Weibull;
  throw std::invalid_argument("unknown centering family: " + s);
}

// Parametric centering family S_theta. theta is unconstrained:
//   loglogistic: S(t) = 1 / (1 + (e^t1 t)^(e^t2))
//   lognormal:   S(t) = 1 - Phi((log t + t1) e^t2)
//   weibull:     S(t) = exp(-(e^t1 t)^(e^t2))
struct CenteringFamily {
  Family tag = Family::Weibull;
  Eigen::Vector2d theta = Eigen::Vector2d::Zero();
};

struct SurvDens {
  double S;  // survival
  double f;  // density
};

inline SurvDens centering_eval(const CenteringFamily& fam, double t) {
  if (!(t > 0.0)) throw std::domain_error("centering_eval: t must be > 0");
  const double th1 = fam.theta[0], th2 = fam.theta[1];
  const double scale = std::exp(th2);
  const double r = (std::log(t) + th1) * scale;
  if (!std::isfinite(r) || !std::isfinite(scale))
    throw std::domain_error("centering_eval: non-finite parameter");
  SurvDens out{};
  switch (fam.tag) {
    case Family::LogLogistic: {
      // S = 1/(1+e^r), F = e^r/(1+e^r); stable in both tails
      const double S = 1.0 / (1.0 + std::exp(r));
      const double F = 1.0 - S;
      out.S = S;
      out.f = scale / t * F * S;
      break;
    }
    case Family::LogNormal: {
      out.S = norm_sf(r);
      out.f = norm_pdf(r) * scale / t;
      break;
    }
    case Family::Weibull: {
      const double u = std::exp(r);
      out.S = std::exp(-u);
      out.f = std::isfinite(u) ? u * scale / t * out.S : 0.0;
      break;
    }
  }
  if (!std::isfinite(out.S)) throw std::domain_error("centering_eval: non-finite survival");
  return out;
}

// Cdf of S_theta on the probability scale, i.e. F_theta(t) = 1 - S_theta(t).
inline double centering_cdf(const CenteringFamily& fam, double t) {
  return 1.0 - centering_eval(fam, t).S;
}

inline Eigen::VectorXd weights_from_z(const Eigen::VectorXd& z) {
  const int L = static_cast<int>(z.size()) + 1;
  double m = 0.0;
  for (int j = 0; j < L - 1; ++j) {
    if (!std::isfinite(z[j])) throw std::domain_error("weights_from_z: non-finite z");
    m = std::max(m, z[j]);
  }
  Eigen::VectorXd w(L);
  double den = std::exp(-m);  // the pinned last coordinate
  for (int j = 0; j < L - 1; ++j) {
    w[j] = std::exp(z[j] - m);
    den += w[j];
  }
  w[L - 1] = std::exp(-m);
  return w / den;
}

inline Eigen::VectorXd z_from_weights(const Eigen::VectorXd& w) {
  const int L = static_cast<int>(w.size());
  const double wL = w[L - 1];
  if (!(wL > 0.0)) throw std::domain_error("z_from_weights: zero weight");
  Eigen::VectorXd z(L - 1);
  for (int j = 0; j < L - 1; ++j) {
    if (!(w[j] > 0.0)) throw std::domain_error("z_from_weights: zero weight");
    z[j] = std::log(w[j]) - std::log(wL);
  }
  return z;
}

// Transformed Bernstein polynomial baseline: a Dirichlet(alpha,...,alpha)
// mixture of Beta(j, L-j+1) cdfs applied to S_theta. alpha = +inf freezes
// the weights at uniform, giving S0 = S_theta (the parametric model).
struct TbpState {
  int L = 1;
  Eigen::VectorXd w;  // length L, positive simplex
  Eigen::VectorXd z;  // length L-1, z_j = log(w_j) - log(w_L)
  double alpha = 1.0;
  CenteringFamily family;

  static TbpState uniform(int L, double alpha, CenteringFamily fam) {
    TbpState s;
    s.L = L;
    s.w = Eigen::VectorXd::Constant(L, 1.0 / L);
    s.z = Eigen::VectorXd::Zero(L - 1);
    s.alpha = alpha;
    s.family = fam;
    return s;
  }

  void set_z(const Eigen::VectorXd& znew) {
    z = znew;
    w = weights_from_z(znew);
  }

  bool parametric() const { return std::isinf(alpha); }
};

namespace detail {

inline const BetaBasisTables& basis_tables(int L) {
  thread_local std::vector<std::unique_ptr<BetaBasisTables>> cache;
  if (L >= static_cast<int>(cache.size())) cache.resize(L + 1);
  if (!cache[L]) cache[L] = std::make_unique<BetaBasisTables>(L);
  return *cache[L];
}

}  // namespace detail

// S0(t) = sum_j w_j I(S_theta(t) | j, L-j+1), f0 = -dS0/dt.
// S_theta is clamped into [1e-15, 1-1e-15] before the beta basis because
// the Beta(j, L-j+1) pdf diverges at the endpoints for some j.
inline SurvDens tbp_eval(const TbpState& state, double t) {
  const SurvDens base = centering_eval(state.family, t);
  if (state.L == 1) return base;
  const double x = std::min(std::max(base.S, 1e-15), 1.0 - 1e-15);
  const auto& tables = detail::basis_tables(state.L);
  thread_local std::vector<double> cdf, pdf;
  tables.eval(x, cdf, pdf);
  double S0 = 0.0, mix = 0.0;
  for (int j = 0; j < state.L; ++j) {
    S0 += state.w[j] * cdf[j];
    mix += state.w[j] * pdf[j];
  }
  return {S0, base.f * mix};
}

// log Dirichlet(alpha,...,alpha) density of w. When z_coords is set, adds
// the log-Jacobian of the z -> w map (sum of log w_j over all L weights),
// giving the prior density of z.
inline double tbp_log_prior(const TbpState& state, bool z_coords) {
  const double a = state.alpha;
  if (!(a > 0.0)) throw std::domain_error("tbp_log_prior: alpha must be > 0");
  const int L = state.L;
  double sum_logw = 0.0;
  for (int j = 0; j < L; ++j) {
    if (!(state.w[j] > 0.0)) throw std::domain_error("tbp_log_prior: zero weight");
    sum_logw += std::log(state.w[j]);
  }
  double lp = lgamma_fn(a * L) - L * lgamma_fn(a) + (a - 1.0) * sum_logw;
  if (z_coords) lp += sum_logw;
  return lp;
}

// Prior density of z at 0 under Dirichlet(alpha,...,alpha):
//   p(0 | alpha) = Gamma(alpha L) / [L^alpha Gamma(alpha)]^L
// (the Savage-Dickey numerator). Returned on the log scale.
inline double tbp_z_prior_at_zero_log(double alpha, int L) {
  return lgamma_fn(alpha * L) - L * (alpha * std::log(static_cast<double>(L)) + lgamma_fn(alpha));
}

}  // namespace spsurv
