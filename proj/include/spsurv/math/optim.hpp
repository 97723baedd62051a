#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace spsurv {

struct OptimResult {
  Eigen::VectorXd x;
  double fval = 0.0;
  bool converged = false;
  int iterations = 0;
  Eigen::MatrixXd inv_hessian;  // numerical, at the solution
};

namespace detail {

inline Eigen::VectorXd num_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd g(d), xp = x, xm = x;
  for (int i = 0; i < d; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

inline Eigen::MatrixXd num_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd H(d, d);
  const double f0 = f(x);
  Eigen::VectorXd h(d);
  for (int i = 0; i < d; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(x[i]));
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h[i];
    xm[i] -= h[i];
    H(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
    for (int j = i + 1; j < d; ++j) {
      Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h[i]; xpp[j] += h[j];
      xpm[i] += h[i]; xpm[j] -= h[j];
      xmp[i] -= h[i]; xmp[j] += h[j];
      xmm[i] -= h[i]; xmm[j] -= h[j];
      H(i, j) = H(j, i) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h[i] * h[j]);
    }
  }
  return H;
}

}  // namespace detail

// Minimizes f by BFGS with numerical gradients and a backtracking Armijo
// line search. inv_hessian is filled from a finite-difference Hessian at
// the solution when that Hessian is positive definite, else from the BFGS
// approximation.
inline OptimResult minimize_bfgs(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0, int max_iter = 200,
                                 double grad_tol = 1e-6) {
  const int d = static_cast<int>(x0.size());
  OptimResult res;
  Eigen::VectorXd x = x0;
  double fx = f(x);
  Eigen::VectorXd g = detail::num_gradient(f, x);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(d, d);

  int it = 0;
  for (; it < max_iter; ++it) {
    if (g.norm() < grad_tol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd p = -Hinv * g;
    if (p.dot(g) >= 0.0) p = -g;  // reset on non-descent direction

    double step = 1.0;
    double fnew = fx;
    Eigen::VectorXd xnew = x;
    bool ok = false;
    for (int ls = 0; ls < 50; ++ls) {
      xnew = x + step * p;
      fnew = f(xnew);
      if (std::isfinite(fnew) && fnew <= fx + 1e-4 * step * g.dot(p)) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;

    const Eigen::VectorXd gnew = detail::num_gradient(f, xnew);
    const Eigen::VectorXd s = xnew - x;
    const Eigen::VectorXd y = gnew - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    x = xnew;
    fx = fnew;
    g = gnew;
  }

  res.x = x;
  res.fval = fx;
  res.iterations = it;

  Eigen::MatrixXd H = detail::num_hessian(f, x);
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() == Eigen::Success) {
    res.inv_hessian = llt.solve(Eigen::MatrixXd::Identity(d, d));
  } else {
    res.inv_hessian = Hinv;
  }
  return res;
}

}  // namespace spsurv
