#pragma once

#include "spsurv/math/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace spsurv {

namespace detail {

inline double dist2(const Eigen::MatrixXd& A, int i, const Eigen::MatrixXd& B, int j) {
  return (A.row(i) - B.row(j)).squaredNorm();
}

}  // namespace detail

// Space-filling design: selects K rows of points minimizing the coverage
// criterion sum_i min_k ||p_i - knot_k||^2. Greedy farthest-point start,
// then best-improvement swap sweeps; every accepted swap strictly
// decreases the criterion. Stops after a sweep with no accepted swap or
// 200 sweeps. Deterministic given the rng seed.
inline std::vector<int> cover_design_indices(const Eigen::MatrixXd& points, int K, Rng& rng) {
  const int m = static_cast<int>(points.rows());
  if (K > m) throw std::invalid_argument("cover_design: K > number of points");
  std::vector<int> sel;
  sel.reserve(K);
  if (K == m) {
    for (int i = 0; i < m; ++i) sel.push_back(i);
    return sel;
  }

  std::vector<bool> in_design(m, false);
  std::vector<double> d1(m), d2(m);  // nearest / second-nearest squared distance
  std::vector<int> n1(m);            // nearest selected slot

  // greedy farthest-point initialization
  int first = rng.uniform_int(m);
  sel.push_back(first);
  in_design[first] = true;
  for (int i = 0; i < m; ++i) d1[i] = detail::dist2(points, i, points, first);
  while (static_cast<int>(sel.size()) < K) {
    int best = -1;
    double bestd = -1.0;
    for (int i = 0; i < m; ++i)
      if (!in_design[i] && d1[i] > bestd) {
        bestd = d1[i];
        best = i;
      }
    sel.push_back(best);
    in_design[best] = true;
    for (int i = 0; i < m; ++i) d1[i] = std::min(d1[i], detail::dist2(points, i, points, best));
  }

  auto refresh = [&]() {
    for (int i = 0; i < m; ++i) {
      double b1 = kInf, b2 = kInf;
      int arg = 0;
      for (int k = 0; k < K; ++k) {
        const double d = detail::dist2(points, i, points, sel[k]);
        if (d < b1) {
          b2 = b1;
          b1 = d;
          arg = k;
        } else if (d < b2) {
          b2 = d;
        }
      }
      d1[i] = b1;
      d2[i] = b2;
      n1[i] = arg;
    }
  };
  refresh();

  double crit = 0.0;
  for (int i = 0; i < m; ++i) crit += d1[i];

  for (int sweep = 0; sweep < 200; ++sweep) {
    bool any = false;
    for (int k = 0; k < K; ++k) {
      int best_c = -1;
      double best_crit = crit;
      for (int c = 0; c < m; ++c) {
        if (in_design[c]) continue;
        double trial = 0.0;
        for (int i = 0; i < m; ++i) {
          const double without_k = (n1[i] == k) ? d2[i] : d1[i];
          trial += std::min(without_k, detail::dist2(points, i, points, c));
        }
        if (trial < best_crit - 1e-14 * std::max(1.0, crit)) {
          best_crit = trial;
          best_c = c;
        }
      }
      if (best_c >= 0) {
        in_design[sel[k]] = false;
        in_design[best_c] = true;
        sel[k] = best_c;
        crit = best_crit;
        refresh();
        any = true;
      }
    }
    if (!any) break;
  }
  return sel;
}

inline Eigen::MatrixXd cover_design(const Eigen::MatrixXd& points, int K, Rng& rng) {
  const auto idx = cover_design_indices(points, K, rng);
  Eigen::MatrixXd knots(K, points.cols());
  for (int k = 0; k < K; ++k) knots.row(k) = points.row(idx[k]);
  return knots;
}

// Nearest-center assignment; ties resolved to the lowest center index.
inline std::vector<int> assign_blocks(const Eigen::MatrixXd& points,
                                      const Eigen::MatrixXd& centers) {
  const int m = static_cast<int>(points.rows());
  const int B = static_cast<int>(centers.rows());
  if (B < 1) throw std::invalid_argument("assign_blocks: need at least one center");
  std::vector<int> block(m, 0);
  for (int i = 0; i < m; ++i) {
    double best = detail::dist2(points, i, centers, 0);
    for (int b = 1; b < B; ++b) {
      const double d = detail::dist2(points, i, centers, b);
      if (d < best) {
        best = d;
        block[i] = b;
      }
    }
  }
  return block;
}

// Knot and block layout shared by all correlation-parameter values.
struct FsaDesign {
  Eigen::MatrixXd knots;      // K x d
  std::vector<int> block_of;  // length m

  static FsaDesign make(const Eigen::MatrixXd& coords, int K, int B, Rng& rng) {
    FsaDesign d;
    d.knots = cover_design(coords, K, rng);
    if (B >= static_cast<int>(coords.rows())) {
      d.block_of.resize(coords.rows());
      for (std::size_t i = 0; i < d.block_of.size(); ++i) d.block_of[i] = static_cast<int>(i);
    } else if (B == 1) {
      d.block_of.assign(coords.rows(), 0);
    } else {
      const Eigen::MatrixXd centers = cover_design(coords, B, rng);
      d.block_of = assign_blocks(coords, centers);
    }
    return d;
  }
};

// Full-scale approximation of R = (1-eps) rho_mm + eps I:
//   R_dag = (1-eps) rho_mK rho_KK^{-1} rho_mK' + R_s,
//   R_s   = (1-eps)(rho_mm - rho_mK rho_KK^{-1} rho_mK') o Delta + eps I,
// with Delta the same-block indicator. Solves and log-determinants go
// through the Sherman-Woodbury-Morrison identity with the K x K
// capacitance matrix rho_KK + (1-eps) rho_mK' R_s^{-1} rho_mK, so only
// block factorizations and one K x K factorization are ever formed.
class FsaPlan {
 public:
  template <typename CorrFn>
  FsaPlan(const Eigen::MatrixXd& coords, const FsaDesign& design, CorrFn corr, double eps)
      : eps_(eps), m_(static_cast<int>(coords.rows())) {
    const int K = static_cast<int>(design.knots.rows());
    const double sc = 1.0 - eps;

    rho_mK_.resize(m_, K);
    for (int i = 0; i < m_; ++i)
      for (int k = 0; k < K; ++k)
        rho_mK_(i, k) = corr(coords.row(i), design.knots.row(k));
    Eigen::MatrixXd rho_KK(K, K);
    for (int i = 0; i < K; ++i) {
      rho_KK(i, i) = 1.0;
      for (int j = i + 1; j < K; ++j)
        rho_KK(i, j) = rho_KK(j, i) = corr(design.knots.row(i), design.knots.row(j));
    }
    chol_kk_.compute(rho_KK);
    if (chol_kk_.info() != Eigen::Success)
      throw std::runtime_error("fsa: knot correlation not positive definite (duplicate knots?)");

    // group indices per block
    const int B = 1 + *std::max_element(design.block_of.begin(), design.block_of.end());
    blocks_.assign(B, {});
    for (int i = 0; i < m_; ++i) blocks_[design.block_of[i]].push_back(i);

    // per-block residual factors
    logdet_rs_ = 0.0;
    block_chol_.resize(B);
    block_mat_.resize(B);
    for (int b = 0; b < B; ++b) {
      const auto& idx = blocks_[b];
      const int nb = static_cast<int>(idx.size());
      if (nb == 0) continue;
      Eigen::MatrixXd rho_bK(nb, static_cast<int>(rho_mK_.cols()));
      for (int r = 0; r < nb; ++r) rho_bK.row(r) = rho_mK_.row(idx[r]);
      Eigen::MatrixXd low = rho_bK * chol_kk_.solve(rho_bK.transpose());
      Eigen::MatrixXd Rb(nb, nb);
      for (int r = 0; r < nb; ++r) {
        for (int c = 0; c < nb; ++c) {
          const double rho = (r == c) ? 1.0 : corr(coords.row(idx[r]), coords.row(idx[c]));
          Rb(r, c) = sc * (rho - low(r, c));
        }
        Rb(r, r) += eps;
      }
      Rb = 0.5 * (Rb + Rb.transpose()).eval();
      block_chol_[b].compute(Rb);
      if (block_chol_[b].info() != Eigen::Success)
        throw std::runtime_error("fsa: residual block not positive definite");
      block_mat_[b] = Rb;
      const Eigen::MatrixXd& Lb = block_chol_[b].matrixLLT();
      for (int r = 0; r < nb; ++r) logdet_rs_ += 2.0 * std::log(Lb(r, r));
    }

    // W = R_s^{-1} rho_mK and the capacitance factorization
    W_ = block_solve(rho_mK_);
    Eigen::MatrixXd cap = rho_KK + sc * rho_mK_.transpose() * W_;
    chol_cap_.compute(cap);
    if (chol_cap_.info() != Eigen::Success)
      throw std::runtime_error("fsa: capacitance matrix not positive definite");
  }

  int size() const { return m_; }
  double nugget() const { return eps_; }

  // R_s^{-1} X via the per-block factorizations.
  Eigen::MatrixXd block_solve(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Y(X.rows(), X.cols());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& idx = blocks_[b];
      if (idx.empty()) continue;
      Eigen::MatrixXd sub(idx.size(), X.cols());
      for (std::size_t r = 0; r < idx.size(); ++r) sub.row(r) = X.row(idx[r]);
      sub = block_chol_[b].solve(sub);
      for (std::size_t r = 0; r < idx.size(); ++r) Y.row(idx[r]) = sub.row(r);
    }
    return Y;
  }

  // R_dag x through the structured representation, O(mK + sum nb^2).
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y =
        (1.0 - eps_) * (rho_mK_ * chol_kk_.solve(rho_mK_.transpose() * x));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& idx = blocks_[b];
      if (idx.empty()) continue;
      Eigen::VectorXd sub(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) sub[r] = x[idx[r]];
      const Eigen::VectorXd prod = block_mat_[b] * sub;
      for (std::size_t r = 0; r < idx.size(); ++r) y[idx[r]] += prod[r];
    }
    return y;
  }

  // (R_dag)^{-1} x by Sherman-Woodbury-Morrison. Knots sitting on data
  // points make R_s nearly singular (the residual vanishes there), which
  // costs the raw formula ~cond(R_s) * eps digits; two rounds of iterative
  // refinement with the structured multiply restore them.
  Eigen::VectorXd solve(const Eigen::VectorXd& x) const {
    Eigen::VectorXd sol = swm_solve(x);
    for (int it = 0; it < 2; ++it) {
      const Eigen::VectorXd resid = x - apply(sol);
      if (resid.norm() <= 1e-14 * x.norm()) break;
      sol += swm_solve(resid);
    }
    return sol;
  }

  // log det(R_dag) = log det(cap) - log det(rho_KK) + sum_b log det(R_s,b).
  double logdet() const {
    auto tri_logdet = [](const Eigen::LLT<Eigen::MatrixXd>& llt) {
      const Eigen::MatrixXd& L = llt.matrixLLT();
      double s = 0.0;
      for (int i = 0; i < L.rows(); ++i) s += 2.0 * std::log(L(i, i));
      return s;
    };
    return tri_logdet(chol_cap_) - tri_logdet(chol_kk_) + logdet_rs_;
  }

  // Dense assembly of R_dag (small m / oracle checks).
  Eigen::MatrixXd dense_correlation() const {
    const double sc = 1.0 - eps_;
    Eigen::MatrixXd R = sc * rho_mK_ * chol_kk_.solve(rho_mK_.transpose());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& idx = blocks_[b];
      if (idx.empty()) continue;
      const Eigen::MatrixXd& Rb = block_mat_[b];
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c) R(idx[r], idx[c]) += Rb(r, c);
    }
    return R;
  }

  // Dense precision (R_dag)^{-1} = R_s^{-1} - (1-eps) W cap^{-1} W'.
  Eigen::MatrixXd precision_dense() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m_, m_);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& idx = blocks_[b];
      if (idx.empty()) continue;
      const int nb = static_cast<int>(idx.size());
      const Eigen::MatrixXd inv =
          block_chol_[b].solve(Eigen::MatrixXd::Identity(nb, nb));
      for (int r = 0; r < nb; ++r)
        for (int c = 0; c < nb; ++c) P(idx[r], idx[c]) = inv(r, c);
    }
    P.noalias() -= (1.0 - eps_) * W_ * chol_cap_.solve(W_.transpose());
    return P;
  }

 private:
  Eigen::VectorXd swm_solve(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd y = block_solve(x);
    const Eigen::VectorXd t = chol_cap_.solve(rho_mK_.transpose() * y);
    return y - (1.0 - eps_) * (W_ * t);
  }

  double eps_;
  int m_;
  Eigen::MatrixXd rho_mK_;
  Eigen::MatrixXd W_;  // R_s^{-1} rho_mK
  Eigen::LLT<Eigen::MatrixXd> chol_kk_, chol_cap_;
  std::vector<std::vector<int>> blocks_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> block_chol_;
  std::vector<Eigen::MatrixXd> block_mat_;
  double logdet_rs_ = 0.0;
};

// Powered-exponential correlation closure for FsaPlan.
struct PowExpCorr {
  double phi, nu;
  double operator()(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
    return std::exp(-std::pow(phi * (a - b).norm(), nu));
  }
};

inline FsaPlan build_fsa(const Eigen::MatrixXd& coords, const FsaDesign& design, double phi,
                         double nu, double eps = 1e-10) {
  return FsaPlan(coords, design, PowExpCorr{phi, nu}, eps);
}

}  // namespace spsurv
