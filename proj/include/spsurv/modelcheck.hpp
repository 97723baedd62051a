#pragma once

#include "spsurv/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

// Residual intervals on the cumulative-hazard scale for one posterior
// draw; under a correct model these are an arbitrarily-censored sample
// from Exp(1).
struct ResidualSample {
  std::vector<std::pair<double, double>> intervals;  // (r(a), r(b)), r(b) may be inf
};

namespace detail {

inline TbpState tbp_from_draw(const PosteriorChain& chain, long s) {
  CenteringFamily fam;
  fam.tag = chain.family;
  fam.theta = chain.theta.row(s).transpose();
  TbpState base;
  base.L = chain.L;
  base.w = chain.w.row(s).transpose();
  base.z = chain.L > 1 ? chain.z.row(s).transpose() : Eigen::VectorXd();
  base.alpha = chain.alpha.size() > s ? chain.alpha[s] : kInf;
  base.family = fam;
  return base;
}

inline double cumhaz_at(LinkModel link, const TbpState& base, double eta, double t) {
  if (!(t > 0.0)) return 0.0;
  const SurvDens sx = link_survival(link, base, eta, t);
  return -std::log(std::max(sx.S, kTinyProb));
}

}  // namespace detail

// Maps every observation's censoring interval through r(t) = -log S_x(t)
// for ncurves randomly chosen saved draws (full parameter state including
// frailties).
inline std::vector<ResidualSample> cox_snell(const PosteriorChain& chain,
                                             const SurvDataset& ds, int ncurves, Rng& rng) {
  std::vector<ResidualSample> out;
  const long nsave = chain.nsave();
  for (int c = 0; c < ncurves; ++c) {
    const long s = rng.uniform_int(static_cast<int>(nsave));
    const TbpState base = detail::tbp_from_draw(chain, s);
    Eigen::VectorXd beff(ds.p());
    for (int j = 0; j < ds.p(); ++j)
      beff[j] = chain.beta(s, j) * (chain.selection ? chain.gamma(s, j) : 1.0);
    ResidualSample rs;
    rs.intervals.reserve(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
      double eta = ds.X.row(i).dot(beff);
      if (chain.v.cols() > 0) eta += chain.v(s, ds.obs[i].unit);
      const double ra = detail::cumhaz_at(chain.link, base, eta, ds.obs[i].interval.a);
      const double rb = std::isfinite(ds.obs[i].interval.b)
                            ? detail::cumhaz_at(chain.link, base, eta, ds.obs[i].interval.b)
                            : kInf;
      rs.intervals.emplace_back(ra, rb);
    }
    out.push_back(std::move(rs));
  }
  return out;
}

// Self-consistency (EM) NPMLE over the Turnbull innermost intervals.
// Intervals follow the dataset convention: exact when a == b, otherwise
// mass in (a, b] with b possibly infinite.
struct TurnbullResult {
  std::vector<double> lo, hi;  // innermost intervals
  std::vector<double> prob;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;

  // P(T > t); defined for t outside the innermost intervals
  double survival(double t) const {
    double s = 0.0;
    for (std::size_t j = 0; j < lo.size(); ++j)
      if (lo[j] > t) s += prob[j];
    return s;
  }

  double cumhaz(double t) const { return -std::log(std::max(survival(t), kTinyProb)); }
};

inline TurnbullResult turnbull_npmle(const std::vector<std::pair<double, double>>& intervals,
                                     double tol = 1e-8, int maxit = 100000) {
  if (intervals.empty()) throw std::invalid_argument("turnbull_npmle: no intervals");
  const std::size_t n = intervals.size();

  // open left endpoints get a shift smaller than any gap in the data so
  // all intervals can be treated as closed
  std::vector<double> vals;
  for (const auto& [a, b] : intervals) {
    vals.push_back(a);
    if (std::isfinite(b)) vals.push_back(b);
  }
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  double gap = 1.0;
  for (std::size_t k = 1; k < vals.size(); ++k)
    gap = std::min(gap, vals[k] - vals[k - 1]);
  const double delta = gap * 1e-3;

  std::vector<double> L(n), R(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool exact = intervals[i].first == intervals[i].second;
    L[i] = exact ? intervals[i].first : intervals[i].first + delta;
    R[i] = intervals[i].second;
  }

  // innermost intervals: a left endpoint immediately followed by a right
  // endpoint in the merged order
  struct Ep {
    double value;
    int type;  // 0 = left, 1 = right
  };
  std::vector<Ep> eps;
  for (std::size_t i = 0; i < n; ++i) {
    eps.push_back({L[i], 0});
    eps.push_back({R[i], 1});
  }
  std::sort(eps.begin(), eps.end(), [](const Ep& a, const Ep& b) {
    if (a.value != b.value) return a.value < b.value;
    return a.type < b.type;
  });
  TurnbullResult res;
  bool have_left = false;
  double last_left = 0.0;
  for (const auto& e : eps) {
    if (e.type == 0) {
      last_left = e.value;
      have_left = true;
    } else if (have_left) {
      res.lo.push_back(last_left);
      res.hi.push_back(e.value);
      have_left = false;
    }
  }
  const std::size_t J = res.lo.size();
  if (J == 0) throw std::runtime_error("turnbull_npmle: no innermost intervals");
  res.degenerate = J == 1 && std::isinf(res.hi[0]);

  // membership
  std::vector<std::vector<int>> members(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < J; ++j)
      if (res.lo[j] >= L[i] && res.hi[j] <= R[i]) members[i].push_back(static_cast<int>(j));

  res.prob.assign(J, 1.0 / J);
  std::vector<double> next(J);
  for (res.iterations = 1; res.iterations <= maxit; ++res.iterations) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (int j : members[i]) denom += res.prob[j];
      if (denom <= 0.0) continue;
      for (int j : members[i]) next[j] += res.prob[j] / denom;
    }
    double change = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      next[j] /= static_cast<double>(n);
      change = std::max(change, std::abs(next[j] - res.prob[j]));
    }
    res.prob = next;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// Least-squares slope of the integrated hazard against t over the support
// points whose cumulative mass lies in [qlo, qhi] (the straightness check
// for Cox-Snell residuals).
inline double turnbull_slope(const TurnbullResult& fit, double qlo = 0.1, double qhi = 0.9) {
  std::vector<double> ts, hs;
  double cum = 0.0;
  for (std::size_t j = 0; j < fit.lo.size(); ++j) {
    cum += fit.prob[j];
    if (!std::isfinite(fit.hi[j])) continue;
    if (cum < qlo || cum > qhi) continue;
    ts.push_back(fit.hi[j]);
    hs.push_back(fit.cumhaz(fit.hi[j]));
  }
  if (ts.size() < 2) return kNaN;
  const double tbar = mean_of(ts), hbar = mean_of(hs);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    sxx += (ts[k] - tbar) * (ts[k] - tbar);
    sxy += (ts[k] - tbar) * (hs[k] - hbar);
  }
  return sxy / sxx;
}

struct LpmlResult {
  double lpml = 0.0;
  Eigen::VectorXd cpo;      // per-observation CPO
  int unstable_count = 0;   // columns whose loglik spread exceeds 30 nats
};

// Harmonic-mean CPO estimator, computed in log space:
// CPO_i = [mean_s exp(-loglik_si)]^{-1}.
inline LpmlResult lpml(const Eigen::MatrixXd& loglik) {
  const long S = loglik.rows(), n = loglik.cols();
  if (S < 2) throw std::invalid_argument("lpml: need at least 2 draws");
  LpmlResult out;
  out.cpo.resize(n);
  std::vector<double> neg(S);
  for (long i = 0; i < n; ++i) {
    double lmax = -kInf, lmin = kInf;
    for (long s = 0; s < S; ++s) {
      neg[s] = -loglik(s, i);
      lmax = std::max(lmax, loglik(s, i));
      lmin = std::min(lmin, loglik(s, i));
    }
    if (lmax - lmin > 30.0) ++out.unstable_count;
    const double log_cpo = std::log(static_cast<double>(S)) - logsumexp(neg);
    out.cpo[i] = std::exp(log_cpo);
    out.lpml += log_cpo;
  }
  return out;
}

struct DicResult {
  double dic = 0.0;
  double pD = 0.0;
  double dbar = 0.0;
};

// DIC from the per-draw log-likelihood matrix and the plug-in total log
// likelihood at the posterior means of the parameter blocks.
inline DicResult dic(const Eigen::MatrixXd& loglik, double plugin_loglik) {
  DicResult out;
  out.dbar = -2.0 * loglik.rowwise().sum().mean();
  out.pD = out.dbar - (-2.0 * plugin_loglik);
  out.dic = out.dbar + out.pD;
  return out;
}

struct WaicResult {
  double waic = 0.0;
  double pwaic = 0.0;
  double lppd = 0.0;
};

inline WaicResult waic(const Eigen::MatrixXd& loglik) {
  const long S = loglik.rows(), n = loglik.cols();
  if (S < 2) throw std::invalid_argument("waic: need at least 2 draws");
  WaicResult out;
  std::vector<double> col(S);
  for (long i = 0; i < n; ++i) {
    for (long s = 0; s < S; ++s) col[s] = loglik(s, i);
    out.lppd += logsumexp(col) - std::log(static_cast<double>(S));
    out.pwaic += var_of(col);
  }
  out.waic = -2.0 * (out.lppd - out.pwaic);
  return out;
}

struct BayesFactorResult {
  double bf10 = kNaN;
  double log_bf10 = kNaN;
  double alpha_hat = kNaN;
  bool regularized = false;
};

// Savage-Dickey ratio for the parametric (z = 0) null against the TBP
// alternative: BF10 = p(0 | alpha_hat) / N_{L-1}(0; m_hat, S_hat).
inline BayesFactorResult savage_dickey_bf(const PosteriorChain& chain) {
  BayesFactorResult out;
  const int d = static_cast<int>(chain.z.cols());
  if (d < 1 || chain.alpha.size() < 2) return out;
  out.alpha_hat = chain.alpha.mean();
  RunningMoments rm(d);
  for (long s = 0; s < chain.nsave(); ++s) rm.update(chain.z.row(s).transpose());
  Eigen::MatrixXd cov = rm.covariance();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-8 * cov.trace() / d;
    out.regularized = true;
  }
  const double log_num = tbp_z_prior_at_zero_log(out.alpha_hat, chain.L);
  const double log_den = mvn_logpdf(Eigen::VectorXd::Zero(d), rm.mean(), cov);
  out.log_bf10 = log_num - log_den;
  out.bf10 = std::exp(out.log_bf10);
  return out;
}

}  // namespace spsurv
