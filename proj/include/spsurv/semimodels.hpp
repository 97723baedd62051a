#pragma once

#include "spsurv/baseline.hpp"
#include "spsurv/frailty.hpp"
#include "spsurv/math/stats.hpp"
#include "spsurv/survdata.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

enum class LinkModel { AFT, PH, PO };

inline const char* link_name(LinkModel l) {
  switch (l) {
    case LinkModel::AFT: return "AFT";
    case LinkModel::PH: return "PH";
    default: return "PO";
  }
}

// Covariate-conditional survival/density for one link at linear predictor
// eta = x'(beta o gamma) + v:
//   AFT: S_x(t) = S0(e^eta t)
//   PH:  S_x(t) = S0(t)^(e^eta)
//   PO:  S_x(t) = e^-eta S0 / (1 + (e^-eta - 1) S0)
inline SurvDens link_survival(LinkModel link, const TbpState& baseline, double eta, double t) {
  if (!(t > 0.0)) throw std::domain_error("link_survival: t must be > 0");
  if (!std::isfinite(eta)) throw std::domain_error("link_survival: non-finite eta");
  switch (link) {
    case LinkModel::AFT: {
      const SurvDens b = tbp_eval(baseline, std::exp(eta) * t);
      return {b.S, std::exp(eta) * b.f};
    }
    case LinkModel::PH: {
      const SurvDens b = tbp_eval(baseline, t);
      const double ee = std::exp(eta);
      const double S = std::exp(ee * std::log(std::max(b.S, kTinyProb)));
      return {S, ee * std::exp((ee - 1.0) * std::log(std::max(b.S, kTinyProb))) * b.f};
    }
    default: {  // PO
      const SurvDens b = tbp_eval(baseline, t);
      const double en = std::exp(-eta);
      const double den = 1.0 + (en - 1.0) * b.S;
      return {en * b.S / den, en * b.f / (den * den)};
    }
  }
}

namespace detail {

// Baseline values cached per observation endpoint; valid across beta and
// frailty updates for PH/PO where the baseline argument is the raw time.
struct ObsBaseline {
  double S_a = 1.0, logS_a = 0.0, logf_a = -kInf;
  double S_b = 0.0, logS_b = -kInf;  // b = +inf gives S_b = 0
  double S_u = 1.0, logS_u = 0.0;    // u = 0 gives S_u = 1
};

inline double safe_log(double x) { return std::log(std::max(x, kTinyProb)); }

inline ObsBaseline obs_baseline(const TbpState& base, const Observation& o) {
  ObsBaseline c;
  const SurvDens da = tbp_eval(base, o.interval.a > 0.0 ? o.interval.a : kTinyProb);
  c.S_a = o.interval.a > 0.0 ? da.S : 1.0;
  c.logS_a = o.interval.a > 0.0 ? safe_log(da.S) : 0.0;
  c.logf_a = safe_log(da.f);
  if (std::isfinite(o.interval.b) && o.interval.b > o.interval.a) {
    const SurvDens db = tbp_eval(base, o.interval.b);
    c.S_b = db.S;
    c.logS_b = safe_log(db.S);
  }
  if (o.u > 0.0) {
    const SurvDens du = tbp_eval(base, o.u);
    c.S_u = du.S;
    c.logS_u = safe_log(du.S);
  }
  return c;
}

inline double link_log_surv_from(LinkModel link, double S0, double logS0, double eta) {
  switch (link) {
    case LinkModel::PH:
      return std::exp(eta) * logS0;
    case LinkModel::PO: {
      const double en = std::exp(-eta);
      return -eta + logS0 - std::log1p((en - 1.0) * S0);
    }
    default:
      throw std::logic_error("cached link evaluation is PH/PO only");
  }
}

inline double link_log_dens_from(LinkModel link, double S0, double logS0, double logf0,
                                 double eta) {
  switch (link) {
    case LinkModel::PH:
      return eta + (std::exp(eta) - 1.0) * logS0 + logf0;
    case LinkModel::PO: {
      const double en = std::exp(-eta);
      return -eta + logf0 - 2.0 * std::log1p((en - 1.0) * S0);
    }
    default:
      throw std::logic_error("cached link evaluation is PH/PO only");
  }
}

// log(S_x(a) - S_x(b)) from the log survivals, with the density-by-width
// fallback when the difference degenerates numerically.
inline double log_surv_diff(double logS_a, double logS_b, double logf_mid, double width) {
  if (logS_b <= -kInf || logS_b < logS_a - 40.0) return logS_a;
  const double diff = logS_b - logS_a;
  if (diff < -1e-12) return logS_a + log1mexp(diff);
  return logf_mid + std::log(std::max(width, kTinyProb));
}

// PH/PO observation log likelihood from cached baseline values.
inline double obs_loglik_from_cache(LinkModel link, const ObsBaseline& c, double eta,
                                    const Observation& o) {
  double ll;
  if (o.interval.exact()) {
    ll = link_log_dens_from(link, c.S_a, c.logS_a, c.logf_a, eta);
  } else {
    const double lsa =
        o.interval.a > 0.0 ? link_log_surv_from(link, c.S_a, c.logS_a, eta) : 0.0;
    const double lsb = std::isfinite(o.interval.b)
                           ? link_log_surv_from(link, c.S_b, c.logS_b, eta)
                           : -kInf;
    const double lfm = link_log_dens_from(link, c.S_a, c.logS_a, c.logf_a, eta);
    ll = log_surv_diff(lsa, lsb, lfm, o.interval.b - o.interval.a);
  }
  if (o.u > 0.0) ll -= link_log_surv_from(link, c.S_u, c.logS_u, eta);
  return ll;
}

}  // namespace detail

// Hyperparameters of the semiparametric frailty models.
struct SemiPriors {
  Eigen::VectorXd beta0;
  Eigen::MatrixXd S0beta;
  double a0 = 1.0, b0 = 1.0;  // alpha ~ Gamma(a0, b0); a0 < 0 fixes alpha
  Eigen::Vector2d theta0 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d V0 = Eigen::Matrix2d::Identity();
  double a_tau = 0.001, b_tau = 0.001;
  double a_phi = 2.0, b_phi = 1.0;
  double M = 10.0, qsel = 0.9;  // spike-and-slab scale choice
};

struct ModelSpec {
  LinkModel link = LinkModel::PH;
  TbpState baseline;
  Eigen::VectorXd beta;
  FrailtyState frailty;
  Eigen::VectorXd gamma;  // selection indicators; all ones when disabled
  bool selection = false;
  SemiPriors priors;

  double eta(const Eigen::MatrixXd& X, int i) const {
    double e = 0.0;
    for (int j = 0; j < X.cols(); ++j) e += X(i, j) * beta[j] * gamma[j];
    return e;
  }
};

// Censored-data log likelihood with left truncation: exact rows contribute
// log f_x(a), censored rows log[S_x(a) - S_x(b)], all divided by S_x(u)
// when u > 0.
inline double obs_loglik(LinkModel link, const TbpState& base, double eta, const Observation& o) {
  using detail::safe_log;
  double ll;
  if (link == LinkModel::AFT) {
    const double s = std::exp(eta);
    if (o.interval.exact()) {
      ll = eta + safe_log(tbp_eval(base, s * o.interval.a).f);
    } else {
      const double lsa =
          o.interval.a > 0.0 ? safe_log(tbp_eval(base, s * o.interval.a).S) : 0.0;
      const double lsb = std::isfinite(o.interval.b)
                             ? safe_log(tbp_eval(base, s * o.interval.b).S)
                             : -kInf;
      const double mid = 0.5 * (o.interval.a + (std::isfinite(o.interval.b)
                                                    ? o.interval.b
                                                    : o.interval.a));
      const double lfm = eta + safe_log(tbp_eval(base, s * std::max(mid, kTinyProb)).f);
      ll = detail::log_surv_diff(lsa, lsb, lfm, o.interval.b - o.interval.a);
    }
    if (o.u > 0.0) ll -= safe_log(tbp_eval(base, s * o.u).S);
    return ll;
  }
  const detail::ObsBaseline c = detail::obs_baseline(base, o);
  return detail::obs_loglik_from_cache(link, c, eta, o);
}

struct LogLik {
  double total = 0.0;
  Eigen::VectorXd per_obs;
};

inline LogLik log_likelihood(const SurvDataset& ds, const ModelSpec& spec) {
  LogLik out;
  out.per_obs.resize(ds.n());
  const bool has_frailty = spec.frailty.kind != FrailtyKind::None;
  for (int i = 0; i < ds.n(); ++i) {
    double eta = spec.eta(ds.X, i);
    if (has_frailty) eta += spec.frailty.v[ds.obs[i].unit];
    out.per_obs[i] = obs_loglik(spec.link, spec.baseline, eta, ds.obs[i]);
    out.total += out.per_obs[i];
  }
  return out;
}

// g for the spike-and-slab prior: a draw of exp(x'beta) stays below M with
// probability q, so g = [log M / Phi^{-1}(q)]^2 / p.
inline double selection_g(double M, double q, int p) {
  const double z = norm_quantile(q);
  const double r = std::log(M) / z;
  return r * r / static_cast<double>(p);
}

// log N_p(beta; 0, g n (X'X)^{-1}) + p log(1/2), X column-centered.
inline double selection_log_prior(const Eigen::VectorXd& beta, const Eigen::MatrixXd& Xc,
                                  double g, int n) {
  const int p = static_cast<int>(beta.size());
  const Eigen::MatrixXd XtX = Xc.transpose() * Xc;
  Eigen::LLT<Eigen::MatrixXd> llt(XtX);
  if (llt.info() != Eigen::Success) {
    // identify offending columns by near-zero pivots of a rank-revealing QR
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
    std::string cols;
    for (int j = qr.rank(); j < p; ++j) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(qr.colsPermutation().indices()[j]);
    }
    throw std::runtime_error("selection prior: X'X singular; collinear columns: " + cols);
  }
  const double gn = g * static_cast<double>(n);
  const Eigen::MatrixXd& L = llt.matrixLLT();
  double logdet_XtX = 0.0;
  for (int i = 0; i < p; ++i) logdet_XtX += 2.0 * std::log(L(i, i));
  const double quad = beta.dot(XtX * beta) / gn;
  const double logdet_cov = p * std::log(gn) - logdet_XtX;
  return -0.5 * p * std::log(2.0 * M_PI) - 0.5 * logdet_cov - 0.5 * quad +
         p * std::log(0.5);
}

}  // namespace spsurv
