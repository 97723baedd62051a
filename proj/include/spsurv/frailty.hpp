#pragma once

#include "spsurv/math/rng.hpp"
#include "spsurv/math/special.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

enum class FrailtyKind { None, Icar, Iid, Grf };

inline const char* frailty_name(FrailtyKind k) {
  switch (k) {
    case FrailtyKind::Icar: return "car";
    case FrailtyKind::Iid: return "iid";
    case FrailtyKind::Grf: return "grf";
    default: return "none";
  }
}

struct FrailtyState {
  FrailtyKind kind = FrailtyKind::None;
  Eigen::VectorXd v;   // length m
  double tau2 = 1.0;
  double phi = 1.0;    // GRF range
  double nu = 1.0;     // GRF shape, fixed in (0, 2]
};

struct ConditionalNormal {
  double mean;
  double variance;
};

// ICAR full conditional: v_i | v_{-i} ~ N(sum_j e_ij v_j / e_i+, tau2/e_i+).
inline ConditionalNormal icar_conditional(int i, const Eigen::VectorXd& v,
                                          const Eigen::MatrixXd& E, double tau2) {
  const double ei = E.row(i).sum();
  if (!(ei >= 1.0)) throw std::runtime_error("icar_conditional: isolated region");
  return {E.row(i).dot(v) / ei, tau2 / ei};
}

inline bool adjacency_connected(const Eigen::MatrixXd& E) {
  const int m = static_cast<int>(E.rows());
  std::vector<int> stack{0};
  std::vector<bool> seen(m, false);
  seen[0] = true;
  int found = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j = 0; j < m; ++j)
      if (E(i, j) != 0.0 && !seen[j]) {
        seen[j] = true;
        ++found;
        stack.push_back(j);
      }
  }
  return found == m;
}

inline double icar_quadform(const Eigen::VectorXd& v, const Eigen::MatrixXd& E) {
  // v' (D - E) v with D = diag(row sums)
  double q = 0.0;
  const int m = static_cast<int>(v.size());
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (E(i, j) != 0.0) q += (v[i] - v[j]) * (v[i] - v[j]);
  return q;
}

// Improper ICAR log density on the sum-to-zero subspace, up to the
// tau-free constant: (m-1)/2 log(1/tau2) - v'(D-E)v / (2 tau2).
// Requires a connected graph (rank deficit exactly 1).
inline double icar_log_density(const Eigen::VectorXd& v, const Eigen::MatrixXd& E, double tau2) {
  if (!adjacency_connected(E))
    throw std::runtime_error("icar_log_density: adjacency graph is disconnected");
  const double m = static_cast<double>(v.size());
  return 0.5 * (m - 1.0) * std::log(1.0 / tau2) - 0.5 * icar_quadform(v, E) / tau2;
}

inline double iid_log_density(const Eigen::VectorXd& v, double tau2) {
  if (!(tau2 > 0.0)) throw std::domain_error("iid_log_density: tau2 must be > 0");
  const double m = static_cast<double>(v.size());
  return -0.5 * m * std::log(2.0 * M_PI * tau2) - 0.5 * v.squaredNorm() / tau2;
}

// Powered exponential correlation exp{-(phi ||s - s'||)^nu}.
inline double grf_correlation(const Eigen::VectorXd& s, const Eigen::VectorXd& s2, double phi,
                              double nu) {
  const double d = (s - s2).norm();
  return std::exp(-std::pow(phi * d, nu));
}

inline Eigen::MatrixXd grf_correlation_matrix(const Eigen::MatrixXd& coords, double phi,
                                              double nu) {
  const int m = static_cast<int>(coords.rows());
  Eigen::MatrixXd R(m, m);
  for (int i = 0; i < m; ++i) {
    R(i, i) = 1.0;
    for (int j = i + 1; j < m; ++j) {
      const double d = (coords.row(i) - coords.row(j)).norm();
      R(i, j) = R(j, i) = std::exp(-std::pow(phi * d, nu));
    }
  }
  return R;
}

// GRF full conditional from the precision matrix P = R^{-1}:
// v_i | v_{-i} ~ N(-sum_{j != i} p_ij v_j / p_ii, tau2 / p_ii).
inline ConditionalNormal grf_conditional(int i, const Eigen::VectorXd& v,
                                         const Eigen::MatrixXd& precision, double tau2) {
  const double pii = precision(i, i);
  if (!(pii > 0.0)) throw std::runtime_error("grf_conditional: non-positive diagonal precision");
  const double s = precision.row(i).dot(v) - pii * v[i];
  return {-s / pii, tau2 / pii};
}

// Same conditional given the precomputed product (P v)_i; used by sweeps
// that maintain P v incrementally.
inline ConditionalNormal grf_conditional_cached(int i, double Pv_i, double v_i,
                                                const Eigen::MatrixXd& precision, double tau2) {
  const double pii = precision(i, i);
  if (!(pii > 0.0)) throw std::runtime_error("grf_conditional: non-positive diagonal precision");
  return {-(Pv_i - pii * v_i) / pii, tau2 / pii};
}

// Default GRF range: phi0 solves rho(d_max; phi0) = 0.001, i.e.
// phi0 = (-log 0.001)^{1/nu} / d_max. The Gamma prior for phi is then
// (a_phi = 2, b_phi = (a_phi - 1)/phi0), mode phi0.
inline double phi0_default(const Eigen::MatrixXd& coords, double nu) {
  const int m = static_cast<int>(coords.rows());
  double dmax = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      dmax = std::max(dmax, (coords.row(i) - coords.row(j)).norm());
  if (!(dmax > 0.0)) throw std::runtime_error("phi0_default: all points coincident");
  return std::pow(-std::log(0.001), 1.0 / nu) / dmax;
}

// Gibbs draw of tau2 from tau^{-2} ~ Gamma(a + r/2, b + Q/2), where r is
// the prior rank (m-1 for ICAR, m otherwise) and Q the quadratic form.
inline double tau2_gibbs(double rank, double quadform, double a_tau, double b_tau, Rng& rng) {
  if (quadform < 0.0) throw std::runtime_error("tau2_gibbs: negative quadratic form");
  const double g = rng.gamma(a_tau + 0.5 * rank, b_tau + 0.5 * quadform);
  return 1.0 / g;
}

}  // namespace spsurv
