#pragma once

#include "spsurv/baseline.hpp"
#include "spsurv/frailty.hpp"
#include "spsurv/fsa.hpp"
#include "spsurv/math/optim.hpp"
#include "spsurv/math/rng.hpp"
#include "spsurv/math/stats.hpp"
#include "spsurv/semimodels.hpp"
#include "spsurv/survdata.hpp"

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace spsurv {

struct ChainConfig {
  long nburn = 5000;
  long nsave = 2000;
  long nskip = 4;
  long ndisplay = 1000;
  std::uint64_t seed = 0;
  bool init_param_mcmc = true;

  long total_iterations() const { return nburn + nsave * (nskip + 1); }
};

// Haario-style adaptive random-walk proposal. Before t0 the proposal is
// N(x, sigma_init); afterwards N(x, s_d C_t + s_d lambda I) with
// s_d = 2.38^2/d and C_t the running sample covariance of the chain
// states, updated every iteration.
class AdaptiveProposal {
 public:
  explicit AdaptiveProposal(const Eigen::MatrixXd& sigma_init)
      : d_(static_cast<int>(sigma_init.rows())),
        s_d_(2.38 * 2.38 / d_),
        t0_(std::max<long>(100, 2 * d_)),
        moments_(d_) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_init);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("AdaptiveProposal: initial covariance not positive definite");
    chol_init_ = llt.matrixL();
  }

  Eigen::VectorXd propose(const Eigen::VectorXd& x, Rng& rng) {
    if (moments_.count() < t0_) return x + chol_init_ * rng.normal_vec(d_);
    Eigen::MatrixXd S = s_d_ * moments_.covariance();
    S.diagonal().array() += s_d_ * kLambda;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) return x + chol_init_ * rng.normal_vec(d_);
    return x + Eigen::MatrixXd(llt.matrixL()) * rng.normal_vec(d_);
  }

  void update(const Eigen::VectorXd& x) { moments_.update(x); }

  int dim() const { return d_; }
  long adaptation_start() const { return t0_; }
  const RunningMoments& moments() const { return moments_; }

  long attempts = 0;
  long accepts = 0;
  double rate() const { return attempts ? static_cast<double>(accepts) / attempts : 0.0; }

  static constexpr double kLambda = 1e-6;

 private:
  int d_;
  double s_d_;
  long t0_;
  RunningMoments moments_;
  Eigen::MatrixXd chol_init_;
};

// One Metropolis step: proposes, evaluates the target (non-finite values
// auto-reject), accepts by the MH ratio, and feeds the resulting state to
// the proposal's running moments. logpost must hold the target at x on
// entry and holds it at the (possibly new) x on exit.
template <typename Target>
inline bool adaptive_mh_step(Eigen::VectorXd& x, double& logpost, Target&& target,
                             AdaptiveProposal& prop, Rng& rng) {
  const Eigen::VectorXd cand = prop.propose(x, rng);
  double lp = -kInf;
  try {
    lp = target(cand);
  } catch (const std::exception&) {
    lp = -kInf;
  }
  ++prop.attempts;
  bool accepted = false;
  if (std::isfinite(lp) && std::log(rng.uniform()) < lp - logpost) {
    x = cand;
    logpost = lp;
    accepted = true;
    ++prop.accepts;
  }
  prop.update(x);
  return accepted;
}

// Correlation operator for GRF frailties: dense factorization below the
// size threshold, FSA-backed above it. Either way the element-level
// conditionals read from a materialized precision matrix.
struct GrfOperator {
  Eigen::MatrixXd precision;  // (R)^{-1} with the nugget folded in
  double logdet = 0.0;        // log det R

  double quadform(const Eigen::VectorXd& v) const { return v.dot(precision * v); }

  static GrfOperator dense(const Eigen::MatrixXd& coords, double phi, double nu, double eps) {
    const int m = static_cast<int>(coords.rows());
    Eigen::MatrixXd R = (1.0 - eps) * grf_correlation_matrix(coords, phi, nu);
    R.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("grf: correlation matrix not positive definite");
    GrfOperator op;
    op.precision = llt.solve(Eigen::MatrixXd::Identity(m, m));
    op.logdet = 0.0;
    const Eigen::MatrixXd& L = llt.matrixLLT();
    for (int i = 0; i < m; ++i) op.logdet += 2.0 * std::log(L(i, i));
    return op;
  }

  static GrfOperator fsa(const Eigen::MatrixXd& coords, const FsaDesign& design, double phi,
                         double nu, double eps) {
    FsaPlan plan(coords, design, PowExpCorr{phi, nu}, eps);
    GrfOperator op;
    op.precision = plan.precision_dense();
    op.logdet = plan.logdet();
    return op;
  }

  static GrfOperator make(const Eigen::MatrixXd& coords, const FsaDesign* design, double phi,
                          double nu, double eps, int fsa_threshold) {
    if (design != nullptr && coords.rows() >= fsa_threshold)
      return fsa(coords, *design, phi, nu, eps);
    return dense(coords, phi, nu, eps);
  }
};

// Single sweep of per-element frailty Metropolis-Hastings updates. The
// proposal for v_i is N(v_i, conditional prior variance); the target is
// unit i's likelihood times the conditional prior. ICAR fields are
// recentered to sum to zero after the sweep.
template <typename UnitLogLik>
inline void update_frailties(FrailtyState& fr, const Eigen::MatrixXd* adjacency,
                             const GrfOperator* grf, UnitLogLik&& unit_ll, Rng& rng,
                             long& attempts, long& accepts) {
  const int m = static_cast<int>(fr.v.size());
  Eigen::VectorXd Pv;
  if (fr.kind == FrailtyKind::Grf) Pv = grf->precision * fr.v;
  for (int i = 0; i < m; ++i) {
    ConditionalNormal cond;
    switch (fr.kind) {
      case FrailtyKind::Icar:
        cond = icar_conditional(i, fr.v, *adjacency, fr.tau2);
        break;
      case FrailtyKind::Iid:
        cond = {0.0, fr.tau2};
        break;
      case FrailtyKind::Grf:
        cond = grf_conditional_cached(i, Pv[i], fr.v[i], grf->precision, fr.tau2);
        break;
      default:
        return;
    }
    const double sd = std::sqrt(cond.variance);
    const double cand = fr.v[i] + sd * rng.normal();
    double lr = normal_logpdf(cand, cond.mean, cond.variance) -
                normal_logpdf(fr.v[i], cond.mean, cond.variance);
    try {
      lr += unit_ll(i, cand) - unit_ll(i, fr.v[i]);
    } catch (const std::exception&) {
      lr = -kInf;
    }
    ++attempts;
    if (std::isfinite(lr) && std::log(rng.uniform()) < lr) {
      if (fr.kind == FrailtyKind::Grf) Pv += (cand - fr.v[i]) * grf->precision.col(i);
      fr.v[i] = cand;
      ++accepts;
    }
  }
  if (fr.kind == FrailtyKind::Icar) fr.v.array() -= fr.v.mean();
}

// Likelihood evaluator with per-observation baseline caching for PH/PO
// (the baseline argument is the raw time there, so beta/frailty updates
// reuse the cached values); AFT recomputes because the argument rescales.
class SemiLikelihood {
 public:
  SemiLikelihood(const SurvDataset& ds, LinkModel link) : ds_(&ds), link_(link) {}

  void set_base(const TbpState& b) {
    base_ = b;
    if (link_ != LinkModel::AFT) {
      cache_.resize(ds_->n());
      for (int i = 0; i < ds_->n(); ++i)
        cache_[i] = detail::obs_baseline(base_, ds_->obs[i]);
    }
  }

  const TbpState& base() const { return base_; }

  double obs_ll(int i, double eta) const {
    if (link_ == LinkModel::AFT) return obs_loglik(link_, base_, eta, ds_->obs[i]);
    return detail::obs_loglik_from_cache(link_, cache_[i], eta, ds_->obs[i]);
  }

  // total at the cached baseline
  double total(const Eigen::VectorXd& Xbeta, const Eigen::VectorXd* v) const {
    double s = 0.0;
    for (int i = 0; i < ds_->n(); ++i)
      s += obs_ll(i, Xbeta[i] + (v ? (*v)[ds_->obs[i].unit] : 0.0));
    return s;
  }

  // total at a candidate baseline (does not disturb the cache)
  double total_with(const TbpState& b, const Eigen::VectorXd& Xbeta,
                    const Eigen::VectorXd* v) const {
    double s = 0.0;
    for (int i = 0; i < ds_->n(); ++i)
      s += obs_loglik(link_, b, Xbeta[i] + (v ? (*v)[ds_->obs[i].unit] : 0.0), ds_->obs[i]);
    return s;
  }

  double unit_total(int unit, const Eigen::VectorXd& Xbeta, double vi) const {
    double s = 0.0;
    const int lo = ds_->unit_start[unit];
    const int hi = lo + ds_->unit_count[unit];
    for (int i = lo; i < hi; ++i) s += obs_ll(i, Xbeta[i] + vi);
    return s;
  }

  Eigen::VectorXd per_obs(const Eigen::VectorXd& Xbeta, const Eigen::VectorXd* v) const {
    Eigen::VectorXd out(ds_->n());
    for (int i = 0; i < ds_->n(); ++i)
      out[i] = obs_ll(i, Xbeta[i] + (v ? (*v)[ds_->obs[i].unit] : 0.0));
    return out;
  }

 private:
  const SurvDataset* ds_;
  LinkModel link_;
  TbpState base_;
  std::vector<detail::ObsBaseline> cache_;
};

struct SemiModelConfig {
  LinkModel link = LinkModel::PH;
  Family family = Family::Weibull;
  int maxL = 15;
  FrailtyKind frailty = FrailtyKind::None;
  bool selection = false;
  // a0 < 0 in the priors fixes alpha at fixed_alpha (+inf = parametric fit)
  double fixed_alpha = kInf;
  double nu = 1.0;
  int nknots = 100;
  int nblock = -1;  // -1 = one block per location
  double fsa_eps = 1e-10;
  int fsa_threshold = 300;
};

struct PriorOverrides {
  std::optional<Eigen::VectorXd> beta0;
  std::optional<Eigen::MatrixXd> S0;
  std::optional<Eigen::Vector2d> theta0;
  std::optional<Eigen::Matrix2d> V0;
  std::optional<double> a0, b0, a_tau, b_tau, a_phi, b_phi, M, q;
};

struct PosteriorChain {
  LinkModel link = LinkModel::PH;
  Family family = Family::Weibull;
  int L = 1;
  FrailtyKind frailty = FrailtyKind::None;
  bool selection = false;
  std::vector<std::string> xnames;

  Eigen::MatrixXd beta;    // nsave x p
  Eigen::MatrixXd theta;   // nsave x 2
  Eigen::MatrixXd z;       // nsave x (L-1)
  Eigen::MatrixXd w;       // nsave x L
  Eigen::VectorXd alpha;   // nsave
  Eigen::MatrixXd v;       // nsave x m (0 cols without frailty)
  Eigen::VectorXd tau2;    // nsave (empty without frailty)
  Eigen::VectorXd phi;     // nsave (GRF only)
  Eigen::MatrixXd gamma;   // nsave x p (selection only)
  Eigen::MatrixXd loglik;  // nsave x n
  std::map<std::string, double> accept_rate;
  SemiPriors priors_used;
  double plugin_loglik = kNaN;  // log likelihood at posterior means

  long nsave() const { return beta.rows(); }
};

struct ParametricInit {
  Eigen::Vector2d theta_hat = Eigen::Vector2d::Zero();
  Eigen::VectorXd beta_hat;
  Eigen::Matrix2d V_hat = Eigen::Matrix2d::Identity();
  Eigen::MatrixXd S_hat;
  bool converged = false;
};

namespace detail {

inline Eigen::Vector2d moment_theta_init(const SurvDataset& ds) {
  std::vector<double> logt;
  for (const auto& o : ds.obs) {
    const double t = std::isfinite(o.interval.b) ? o.interval.b : o.interval.a;
    if (t > 0.0) logt.push_back(std::log(t));
  }
  Eigen::Vector2d th;
  if (logt.size() < 2) {
    th << 0.0, 0.0;
    return th;
  }
  const double mu = mean_of(logt);
  const double sd = std::max(sd_of(logt), 1e-3);
  th << -mu, -std::log(sd);
  return th;
}

}  // namespace detail

// Quasi-Newton fit of the parametric (uniform-weight) non-frailty model;
// returns point estimates with inverse-Hessian covariances. Falls back to
// moment initialization with unit covariances when the optimizer fails.
inline ParametricInit init_parametric(const SurvDataset& ds, LinkModel link, Family family,
                                      std::ostream* status = nullptr) {
  const int p = ds.p();
  ParametricInit out;
  out.beta_hat = Eigen::VectorXd::Zero(p);
  out.S_hat = Eigen::MatrixXd::Identity(p, p);

  const Eigen::Vector2d th0 = detail::moment_theta_init(ds);
  Eigen::VectorXd x0(2 + p);
  x0.head(2) = th0;
  x0.tail(p).setZero();

  auto negll = [&](const Eigen::VectorXd& x) -> double {
    CenteringFamily fam;
    fam.tag = family;
    fam.theta = x.head(2);
    TbpState base = TbpState::uniform(1, kInf, fam);
    double total = 0.0;
    try {
      for (int i = 0; i < ds.n(); ++i) {
        double eta = 0.0;
        for (int j = 0; j < p; ++j) eta += ds.X(i, j) * x[2 + j];
        total += obs_loglik(link, base, eta, ds.obs[i]);
      }
    } catch (const std::exception&) {
      return kInf;
    }
    return std::isfinite(total) ? -total : kInf;
  };

  const OptimResult res = minimize_bfgs(negll, x0, 300);
  Eigen::LLT<Eigen::MatrixXd> llt(res.inv_hessian);
  if (res.converged && llt.info() == Eigen::Success) {
    out.theta_hat = res.x.head(2);
    out.beta_hat = res.x.tail(p);
    out.V_hat = res.inv_hessian.topLeftCorner(2, 2);
    if (p > 0) out.S_hat = res.inv_hessian.bottomRightCorner(p, p);
    out.converged = true;
  } else {
    if (status)
      *status << "warning: parametric optimizer did not converge; using moment "
                 "initialization\n";
    out.theta_hat = th0;
    out.V_hat = 0.1 * Eigen::Matrix2d::Identity();
    if (p > 0) out.S_hat = 0.1 * Eigen::MatrixXd::Identity(p, p);
  }
  return out;
}

namespace detail {

struct ChainState {
  Eigen::VectorXd beta;
  Eigen::Vector2d theta;
  Eigen::VectorXd z;
  double alpha = 1.0;
  FrailtyState fr;
  Eigen::VectorXd gamma;
};

// Core sampler shared by the pilot (parametric) and main chains.
inline PosteriorChain run_chain_core(const SurvDataset& ds, const SemiModelConfig& cfg,
                                     const ChainConfig& mc, const SemiPriors& priors,
                                     const ParametricInit& init, bool parametric_only,
                                     double fixed_alpha, Rng& rng, std::ostream* status) {
  const int n = ds.n(), p = ds.p(), m = ds.m();
  const bool alpha_fixed = priors.a0 < 0.0 || parametric_only;
  const bool tbp_active =
      cfg.maxL > 1 && !(parametric_only || (alpha_fixed && std::isinf(fixed_alpha)));
  const int L = tbp_active || !std::isinf(fixed_alpha) ? cfg.maxL : 1;
  const bool has_frailty = cfg.frailty != FrailtyKind::None;
  const bool grf = cfg.frailty == FrailtyKind::Grf;
  const bool selection = cfg.selection && !parametric_only && p > 0;

  // state
  ChainState st;
  st.beta = init.beta_hat;
  st.theta = init.theta_hat;
  st.z = Eigen::VectorXd::Zero(std::max(L - 1, 0));
  st.alpha = alpha_fixed ? fixed_alpha : 1.0;
  st.gamma = Eigen::VectorXd::Ones(p);
  CenteringFamily fam;
  fam.tag = cfg.family;
  fam.theta = st.theta;
  TbpState base = TbpState::uniform(L, st.alpha, fam);

  // frailty structures
  const Eigen::MatrixXd* E = nullptr;
  std::optional<FsaDesign> design;
  std::optional<GrfOperator> grf_op;
  double phi0 = 1.0;
  SemiPriors pri = priors;
  if (has_frailty) {
    st.fr.kind = cfg.frailty;
    st.fr.v = Eigen::VectorXd::Zero(m);
    st.fr.tau2 = 1.0;
    st.fr.nu = cfg.nu;
    if (cfg.frailty == FrailtyKind::Icar) {
      if (ds.spatial.kind != SpatialKind::Areal)
        throw std::runtime_error("car frailty requires an adjacency matrix");
      if (!adjacency_connected(ds.spatial.adjacency))
        throw std::runtime_error("car frailty requires a connected adjacency graph");
      E = &ds.spatial.adjacency;
    } else if (grf) {
      if (ds.spatial.kind != SpatialKind::Geo)
        throw std::runtime_error("grf frailty requires coordinates");
      phi0 = phi0_default(ds.spatial.coords, cfg.nu);
      if (std::isnan(pri.b_phi)) pri.b_phi = (pri.a_phi - 1.0) / phi0;
      st.fr.phi = phi0;
      if (m >= cfg.fsa_threshold) {
        const int K = std::min(cfg.nknots, m);
        const int B = cfg.nblock <= 0 ? m : std::min(cfg.nblock, m);
        design = FsaDesign::make(ds.spatial.coords, K, B, rng);
      }
      grf_op = GrfOperator::make(ds.spatial.coords, design ? &*design : nullptr, st.fr.phi,
                                 cfg.nu, cfg.fsa_eps, cfg.fsa_threshold);
    }
  }

  // selection scaffolding
  Eigen::MatrixXd Xc;
  double gsel = 1.0;
  if (selection) {
    Xc = ds.X;
    for (int j = 0; j < p; ++j) Xc.col(j).array() -= Xc.col(j).mean();
    gsel = selection_g(pri.M, pri.qsel, p);
  }

  SemiLikelihood lik(ds, cfg.link);
  lik.set_base(base);
  Eigen::VectorXd Xbeta = ds.X * st.beta.cwiseProduct(st.gamma).eval();
  const Eigen::VectorXd* vptr = has_frailty ? &st.fr.v : nullptr;

  auto beta_log_prior = [&](const Eigen::VectorXd& b) {
    if (selection) return selection_log_prior(b, Xc, gsel, n);
    return mvn_logpdf(b, pri.beta0, pri.S0beta);
  };
  auto theta_log_prior = [&](const Eigen::Vector2d& th) {
    return mvn_logpdf(th, pri.theta0, pri.V0);
  };

  // proposals
  std::optional<AdaptiveProposal> prop_beta, prop_theta, prop_z, prop_alpha, prop_phi;
  if (p > 0) prop_beta.emplace(init.S_hat);
  prop_theta.emplace(init.V_hat);
  if (tbp_active && L > 1)
    prop_z.emplace(0.16 * Eigen::MatrixXd::Identity(L - 1, L - 1));
  if (tbp_active && !alpha_fixed)
    prop_alpha.emplace(0.16 * Eigen::MatrixXd::Identity(1, 1));
  if (grf) prop_phi.emplace(0.16 * Eigen::MatrixXd::Identity(1, 1));

  long frail_attempts = 0, frail_accepts = 0, gamma_attempts = 0, gamma_accepts = 0;

  const long total = mc.total_iterations();
  const long nsave = mc.nsave;
  PosteriorChain out;
  out.link = cfg.link;
  out.family = cfg.family;
  out.L = L;
  out.frailty = cfg.frailty;
  out.selection = selection;
  out.xnames = ds.xnames;
  out.priors_used = pri;
  out.beta.resize(nsave, p);
  out.theta.resize(nsave, 2);
  out.z.resize(nsave, std::max(L - 1, 0));
  out.w.resize(nsave, L);
  out.alpha.resize(nsave);
  out.v.resize(nsave, has_frailty ? m : 0);
  if (has_frailty) out.tau2.resize(nsave);
  if (grf) out.phi.resize(nsave);
  if (selection) out.gamma.resize(nsave, p);
  out.loglik.resize(nsave, n);

  // cached log-likelihood of the current state
  double cur_ll = lik.total(Xbeta, vptr);

  long saved = 0;
  for (long it = 1; it <= total; ++it) {
    // beta block
    if (p > 0) {
      Eigen::VectorXd b = st.beta;
      double lp = cur_ll + beta_log_prior(b);
      const Eigen::VectorXd* vp = vptr;
      if (adaptive_mh_step(
              b, lp,
              [&](const Eigen::VectorXd& cand) {
                const Eigen::VectorXd xb = ds.X * cand.cwiseProduct(st.gamma).eval();
                return lik.total(xb, vp) + beta_log_prior(cand);
              },
              *prop_beta, rng)) {
        st.beta = b;
        Xbeta = ds.X * st.beta.cwiseProduct(st.gamma).eval();
        cur_ll = lp - beta_log_prior(st.beta);
      }
    }

    // theta block
    {
      Eigen::VectorXd th = st.theta;
      double lp = cur_ll + theta_log_prior(st.theta);
      if (adaptive_mh_step(
              th, lp,
              [&](const Eigen::VectorXd& cand) {
                TbpState b2 = base;
                b2.family.theta = cand;
                return lik.total_with(b2, Xbeta, vptr) +
                       theta_log_prior(Eigen::Vector2d(cand));
              },
              *prop_theta, rng)) {
        st.theta = th;
        base.family.theta = th;
        lik.set_base(base);
        cur_ll = lp - theta_log_prior(st.theta);
      }
    }

    // z block (TBP weights)
    if (prop_z) {
      Eigen::VectorXd zc = st.z;
      TbpState zb = base;
      double lp = cur_ll + tbp_log_prior(base, true);
      if (adaptive_mh_step(
              zc, lp,
              [&](const Eigen::VectorXd& cand) {
                TbpState b2 = base;
                b2.set_z(cand);
                return lik.total_with(b2, Xbeta, vptr) + tbp_log_prior(b2, true);
              },
              *prop_z, rng)) {
        st.z = zc;
        base.set_z(zc);
        lik.set_base(base);
        cur_ll = lp - tbp_log_prior(base, true);
      }
    }

    // alpha block on the log scale; the likelihood does not involve alpha
    if (prop_alpha) {
      Eigen::VectorXd la(1);
      la[0] = std::log(st.alpha);
      auto alpha_target = [&](const Eigen::VectorXd& cand) {
        const double a = std::exp(cand[0]);
        TbpState b2 = base;
        b2.alpha = a;
        return tbp_log_prior(b2, true) + gamma_logpdf(a, pri.a0, pri.b0) + cand[0];
      };
      double lp = alpha_target(la);
      if (adaptive_mh_step(la, lp, alpha_target, *prop_alpha, rng)) {
        st.alpha = std::exp(la[0]);
        base.alpha = st.alpha;
      }
    }

    // selection indicator flips (likelihood ratio only; the Bernoulli(1/2)
    // prior and the beta prior are symmetric in gamma)
    if (selection) {
      for (int j = 0; j < p; ++j) {
        Eigen::VectorXd g2 = st.gamma;
        g2[j] = 1.0 - g2[j];
        const Eigen::VectorXd xb2 = ds.X * st.beta.cwiseProduct(g2).eval();
        double ll2;
        try {
          ll2 = lik.total(xb2, vptr);
        } catch (const std::exception&) {
          ll2 = -kInf;
        }
        ++gamma_attempts;
        if (std::isfinite(ll2) && std::log(rng.uniform()) < ll2 - cur_ll) {
          st.gamma = g2;
          Xbeta = xb2;
          cur_ll = ll2;
          ++gamma_accepts;
        }
      }
    }

    // frailty sweep, tau2 Gibbs, phi update
    if (has_frailty) {
      update_frailties(
          st.fr, E, grf_op ? &*grf_op : nullptr,
          [&](int unit, double vi) { return lik.unit_total(unit, Xbeta, vi); }, rng,
          frail_attempts, frail_accepts);
      cur_ll = lik.total(Xbeta, vptr);

      double rank, quad;
      if (cfg.frailty == FrailtyKind::Icar) {
        rank = m - 1.0;
        quad = icar_quadform(st.fr.v, *E);
      } else if (cfg.frailty == FrailtyKind::Iid) {
        rank = m;
        quad = st.fr.v.squaredNorm();
      } else {
        rank = m;
        quad = grf_op->quadform(st.fr.v);
      }
      st.fr.tau2 = tau2_gibbs(rank, quad, pri.a_tau, pri.b_tau, rng);

      if (grf) {
        Eigen::VectorXd lphi(1);
        lphi[0] = std::log(st.fr.phi);
        auto phi_target = [&](const Eigen::VectorXd& cand) {
          const double ph = std::exp(cand[0]);
          GrfOperator op2 = GrfOperator::make(ds.spatial.coords, design ? &*design : nullptr,
                                              ph, cfg.nu, cfg.fsa_eps, cfg.fsa_threshold);
          const double vprior = -0.5 * op2.logdet - 0.5 * op2.quadform(st.fr.v) / st.fr.tau2;
          return vprior + gamma_logpdf(ph, pri.a_phi, pri.b_phi) + cand[0];
        };
        double lp = -0.5 * grf_op->logdet - 0.5 * grf_op->quadform(st.fr.v) / st.fr.tau2 +
                    gamma_logpdf(st.fr.phi, pri.a_phi, pri.b_phi) + lphi[0];
        if (adaptive_mh_step(lphi, lp, phi_target, *prop_phi, rng)) {
          st.fr.phi = std::exp(lphi[0]);
          grf_op = GrfOperator::make(ds.spatial.coords, design ? &*design : nullptr,
                                     st.fr.phi, cfg.nu, cfg.fsa_eps, cfg.fsa_threshold);
        }
      }
    }

    // save
    if (it > mc.nburn && (it - mc.nburn) % (mc.nskip + 1) == 0 && saved < nsave) {
      out.beta.row(saved) = st.beta.transpose();
      out.theta.row(saved) = st.theta.transpose();
      if (L > 1) out.z.row(saved) = st.z.transpose();
      out.w.row(saved) = base.w.transpose();
      out.alpha[saved] = st.alpha;
      if (has_frailty) {
        out.v.row(saved) = st.fr.v.transpose();
        out.tau2[saved] = st.fr.tau2;
        if (grf) out.phi[saved] = st.fr.phi;
      }
      if (selection) out.gamma.row(saved) = st.gamma.transpose();
      out.loglik.row(saved) = lik.per_obs(Xbeta, vptr).transpose();
      ++saved;
      if (status && mc.ndisplay > 0 && saved % mc.ndisplay == 0)
        *status << "saved " << saved << " of " << nsave << " draws\n";
    }
  }

  if (prop_beta) out.accept_rate["beta"] = prop_beta->rate();
  out.accept_rate["theta"] = prop_theta->rate();
  if (prop_z) out.accept_rate["z"] = prop_z->rate();
  if (prop_alpha) out.accept_rate["alpha"] = prop_alpha->rate();
  if (prop_phi) out.accept_rate["phi"] = prop_phi->rate();
  if (has_frailty)
    out.accept_rate["frailty"] =
        frail_attempts ? static_cast<double>(frail_accepts) / frail_attempts : 0.0;
  if (selection)
    out.accept_rate["gamma"] =
        gamma_attempts ? static_cast<double>(gamma_accepts) / gamma_attempts : 0.0;

  // plug-in log likelihood at posterior means (mean of w, not z; effective
  // coefficients beta o gamma averaged on the product scale)
  {
    TbpState pb = base;
    pb.family.theta = out.theta.colwise().mean().transpose();
    Eigen::VectorXd wbar = out.w.colwise().mean().transpose();
    pb.w = wbar / wbar.sum();
    Eigen::VectorXd beff(p);
    for (int j = 0; j < p; ++j) {
      double s = 0.0;
      for (long d = 0; d < nsave; ++d)
        s += out.beta(d, j) * (selection ? out.gamma(d, j) : 1.0);
      beff[j] = s / nsave;
    }
    SemiLikelihood plik(ds, cfg.link);
    plik.set_base(pb);
    Eigen::VectorXd xb = ds.X * beff;
    Eigen::VectorXd vbar;
    const Eigen::VectorXd* vb = nullptr;
    if (has_frailty) {
      vbar = out.v.colwise().mean().transpose();
      vb = &vbar;
    }
    out.plugin_loglik = plik.total(xb, vb);
  }

  return out;
}

}  // namespace detail

// Fits the semiparametric frailty model. Empirical-Bayes initialization:
// a quasi-Newton parametric fit supplies starting values and proposal
// covariances; with init_param_mcmc an additional parametric pilot chain
// (nburn 5000, nsave 5000, nskip 0) refines them, and the theta prior
// defaults are set from the resulting estimates (theta0 = theta_hat,
// V0 = 10 V_hat).
inline PosteriorChain run_chain(const SurvDataset& ds, const SemiModelConfig& cfg,
                                const ChainConfig& mc, const PriorOverrides& over = {},
                                std::ostream* status = nullptr) {
  const int p = ds.p();
  Rng rng(mc.seed);

  ParametricInit init = init_parametric(ds, cfg.link, cfg.family, status);

  const bool parametric_target = over.a0 && *over.a0 < 0.0 && std::isinf(cfg.fixed_alpha);
  if (mc.init_param_mcmc && !parametric_target) {
    SemiPriors pilot_priors;
    pilot_priors.beta0 = Eigen::VectorXd::Zero(p);
    pilot_priors.S0beta = 1e10 * Eigen::MatrixXd::Identity(std::max(p, 1), std::max(p, 1));
    pilot_priors.theta0 = init.theta_hat;
    pilot_priors.V0 = 10.0 * init.V_hat;
    pilot_priors.a_tau = over.a_tau.value_or(0.001);
    pilot_priors.b_tau = over.b_tau.value_or(0.001);
    pilot_priors.a_phi = over.a_phi.value_or(2.0);
    pilot_priors.b_phi = over.b_phi.value_or(kNaN);
    ChainConfig pilot_mc;
    pilot_mc.nburn = 5000;
    pilot_mc.nsave = 5000;
    pilot_mc.nskip = 0;
    pilot_mc.ndisplay = 0;
    pilot_mc.seed = mc.seed;
    if (status) *status << "running parametric pilot chain\n";
    PosteriorChain pilot = detail::run_chain_core(ds, cfg, pilot_mc, pilot_priors, init, true,
                                                  kInf, rng, nullptr);
    init.theta_hat = pilot.theta.colwise().mean().transpose();
    RunningMoments th_m(2);
    for (long d = 0; d < pilot.nsave(); ++d) th_m.update(pilot.theta.row(d).transpose());
    init.V_hat = th_m.covariance();
    if (p > 0) {
      init.beta_hat = pilot.beta.colwise().mean().transpose();
      RunningMoments b_m(p);
      for (long d = 0; d < pilot.nsave(); ++d) b_m.update(pilot.beta.row(d).transpose());
      init.S_hat = b_m.covariance();
    }
    // keep the proposal covariances positive definite
    init.V_hat.diagonal().array() += 1e-8;
    if (p > 0) init.S_hat.diagonal().array() += 1e-10;
  }

  SemiPriors priors;
  priors.beta0 = over.beta0.value_or(Eigen::VectorXd::Zero(p));
  priors.S0beta = over.S0.value_or(
      (1e10 * Eigen::MatrixXd::Identity(std::max(p, 1), std::max(p, 1))).eval());
  priors.theta0 = over.theta0.value_or(init.theta_hat);
  priors.V0 = over.V0.value_or((10.0 * init.V_hat).eval());
  priors.a0 = over.a0.value_or(1.0);
  priors.b0 = over.b0.value_or(1.0);
  priors.a_tau = over.a_tau.value_or(0.001);
  priors.b_tau = over.b_tau.value_or(0.001);
  priors.a_phi = over.a_phi.value_or(2.0);
  priors.b_phi = over.b_phi.value_or(kNaN);  // NaN = derive from phi0 (GRF)
  priors.M = over.M.value_or(10.0);
  priors.qsel = over.q.value_or(0.9);

  Eigen::LLT<Eigen::MatrixXd> v0llt(priors.V0);
  if (v0llt.info() != Eigen::Success)
    priors.V0 = Eigen::Matrix2d::Identity();

  return detail::run_chain_core(ds, cfg, mc, priors, init, false, cfg.fixed_alpha, rng,
                                status);
}

}  // namespace spsurv
