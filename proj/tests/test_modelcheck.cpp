#include <catch2/catch_amalgamated.hpp>

#include "spsurv/modelcheck.hpp"

#include <cmath>

using namespace spsurv;

namespace {

// brute-force references computed by direct summation, no log-space tricks
double lpml_brute(const Eigen::MatrixXd& ll) {
  double out = 0.0;
  for (long i = 0; i < ll.cols(); ++i) {
    double acc = 0.0;
    for (long s = 0; s < ll.rows(); ++s) acc += std::exp(-ll(s, i));
    out += std::log(1.0 / (acc / ll.rows()));
  }
  return out;
}

double waic_brute(const Eigen::MatrixXd& ll) {
  double lppd = 0.0, pw = 0.0;
  for (long i = 0; i < ll.cols(); ++i) {
    double acc = 0.0, mean = 0.0;
    for (long s = 0; s < ll.rows(); ++s) {
      acc += std::exp(ll(s, i));
      mean += ll(s, i);
    }
    mean /= ll.rows();
    lppd += std::log(acc / ll.rows());
    double v = 0.0;
    for (long s = 0; s < ll.rows(); ++s) v += (ll(s, i) - mean) * (ll(s, i) - mean);
    pw += v / (ll.rows() - 1.0);
  }
  return -2.0 * (lppd - pw);
}

}  // namespace

TEST_CASE("lpml closed forms and brute-force oracle") {
  SECTION("constant column") {
    Eigen::MatrixXd ll(3, 2);
    ll.col(0).setConstant(-1.3);
    ll.col(1).setConstant(0.4);
    auto r = lpml(ll);
    CHECK(r.cpo[0] == Catch::Approx(std::exp(-1.3)).epsilon(1e-12));
    CHECK(r.lpml == Catch::Approx(-1.3 + 0.4).epsilon(1e-12));
  }

  SECTION("two-draw hand case {0, log 2}") {
    Eigen::MatrixXd ll(2, 1);
    ll << 0.0, std::log(2.0);
    auto r = lpml(ll);
    CHECK(r.cpo[0] == Catch::Approx(4.0 / 3.0).epsilon(1e-12));
  }

  SECTION("random 5x4 matrices match direct summation to 1e-12") {
    Rng rng(3);
    for (int rep = 0; rep < 25; ++rep) {
      Eigen::MatrixXd ll(5, 4);
      for (int s = 0; s < 5; ++s)
        for (int i = 0; i < 4; ++i) ll(s, i) = -2.0 + 2.0 * rng.normal();
      auto r = lpml(ll);
      CHECK(r.lpml == Catch::Approx(lpml_brute(ll)).margin(1e-12));
    }
  }

  SECTION("instability flag on a 30+ nat spread") {
    Eigen::MatrixXd ll(2, 1);
    ll << 0.0, -40.0;
    CHECK(lpml(ll).unstable_count == 1);
  }
}

TEST_CASE("waic closed forms and brute-force oracle") {
  SECTION("constant chain has pWAIC 0") {
    Eigen::MatrixXd ll(4, 3);
    ll.setConstant(-2.0);
    auto r = waic(ll);
    CHECK(r.pwaic == Catch::Approx(0.0).margin(1e-14));
    CHECK(r.waic == Catch::Approx(-2.0 * (-2.0 * 3)).epsilon(1e-12));
  }

  SECTION("two-draw hand case per column {0, log 2}") {
    Eigen::MatrixXd ll(2, 1);
    ll << 0.0, std::log(2.0);
    auto r = waic(ll);
    CHECK(r.lppd == Catch::Approx(std::log(1.5)).epsilon(1e-12));
    CHECK(r.pwaic == Catch::Approx(std::log(2.0) * std::log(2.0) / 2.0).epsilon(1e-12));
  }

  SECTION("random matrices match direct summation") {
    Rng rng(5);
    for (int rep = 0; rep < 25; ++rep) {
      Eigen::MatrixXd ll(5, 4);
      for (int s = 0; s < 5; ++s)
        for (int i = 0; i < 4; ++i) ll(s, i) = -1.0 + rng.normal();
      CHECK(waic(ll).waic == Catch::Approx(waic_brute(ll)).margin(1e-12));
    }
  }

  SECTION("LPML is never above lppd") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::MatrixXd ll(8, 6);
      for (int s = 0; s < 8; ++s)
        for (int i = 0; i < 6; ++i) ll(s, i) = rng.normal();
      CHECK(lpml(ll).lpml <= waic(ll).lppd + 1e-12);
    }
  }
}

TEST_CASE("dic identities") {
  Eigen::MatrixXd ll(3, 2);
  ll.setConstant(-1.5);
  // constant chain: plugin equals any draw's total
  auto r = dic(ll, -3.0);
  CHECK(r.pD == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.dic == Catch::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("turnbull reductions") {
  SECTION("all exact observations give the empirical distribution") {
    std::vector<std::pair<double, double>> iv = {{1, 1}, {2, 2}, {2, 2}, {5, 5}};
    auto fit = turnbull_npmle(iv, 1e-12);
    REQUIRE(fit.lo.size() == 3);
    CHECK(fit.prob[0] == Catch::Approx(0.25).margin(1e-10));
    CHECK(fit.prob[1] == Catch::Approx(0.5).margin(1e-10));
    CHECK(fit.prob[2] == Catch::Approx(0.25).margin(1e-10));
    CHECK(fit.survival(1.0) == Catch::Approx(0.75).margin(1e-10));
    CHECK(fit.survival(4.0) == Catch::Approx(0.25).margin(1e-10));
  }

  SECTION("right-censored mix equals Kaplan-Meier") {
    // events at 1, 2; censored at 1.5: KM S(1) = 2/3, S(2) = 0
    std::vector<std::pair<double, double>> iv = {{1, 1}, {1.5, kInf}, {2, 2}};
    auto fit = turnbull_npmle(iv, 1e-13);
    CHECK(fit.survival(1.0) == Catch::Approx(2.0 / 3.0).margin(1e-10));
    CHECK(fit.survival(2.0) == Catch::Approx(0.0).margin(1e-10));

    // richer case: events 1, 3, 4; censored 2, 5
    // KM: S(1)=4/5, S(3)=4/5*2/3, S(4)=4/5*2/3*1/2
    std::vector<std::pair<double, double>> iv2 = {
        {1, 1}, {2, kInf}, {3, 3}, {4, 4}, {5, kInf}};
    auto f2 = turnbull_npmle(iv2, 1e-13);
    CHECK(f2.survival(1.0) == Catch::Approx(0.8).margin(1e-10));
    CHECK(f2.survival(3.0) == Catch::Approx(0.8 * 2.0 / 3.0).margin(1e-10));
    CHECK(f2.survival(4.0) == Catch::Approx(0.8 * 2.0 / 3.0 * 0.5).margin(1e-10));
  }

  SECTION("interval-censored data runs to convergence") {
    std::vector<std::pair<double, double>> iv = {
        {0, 2}, {1, 3}, {2, 4}, {3, kInf}, {1.5, 1.5}};
    auto fit = turnbull_npmle(iv);
    CHECK(fit.converged);
    double total = 0.0;
    for (double pj : fit.prob) total += pj;
    CHECK(total == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("no finite information is flagged") {
    std::vector<std::pair<double, double>> iv = {{0, kInf}, {0, kInf}};
    auto fit = turnbull_npmle(iv);
    CHECK(fit.degenerate);
  }
}

TEST_CASE("turnbull slope on simulated Exp(1) data") {
  Rng rng(11);
  std::vector<std::pair<double, double>> iv;
  for (int i = 0; i < 2000; ++i) {
    const double t = rng.exponential(1.0);
    iv.emplace_back(t, t);
  }
  auto fit = turnbull_npmle(iv, 1e-10);
  const double slope = turnbull_slope(fit, 0.1, 0.9);
  CHECK(slope > 0.9);
  CHECK(slope < 1.1);
}

TEST_CASE("cox-snell residuals") {
  // tiny parametric chain by hand: Weibull theta=0, S_x = exp(-t e^eta)
  PosteriorChain chain;
  chain.link = LinkModel::PH;
  chain.family = Family::Weibull;
  chain.L = 1;
  chain.beta.resize(2, 1);
  chain.beta << 0.0, 0.0;
  chain.theta.resize(2, 2);
  chain.theta.setZero();
  chain.z.resize(2, 0);
  chain.w.resize(2, 1);
  chain.w.setOnes();
  chain.alpha.resize(2);
  chain.alpha.setConstant(kInf);

  SurvDataset ds;
  ds.obs.resize(3);
  ds.obs[0].interval = {0.7, 0.7};
  ds.obs[1].interval = {1.1, kInf};
  ds.obs[2].interval = {0.5, 2.0};
  ds.X = Eigen::MatrixXd::Zero(3, 1);
  ds.x_mean = Eigen::VectorXd::Zero(1);
  ds.x_sd = Eigen::VectorXd::Ones(1);
  ds.xnames = {"x"};
  ds.spatial.unit_labels = {"all"};
  ds.rebuild_unit_index();

  Rng rng(3);
  auto curves = cox_snell(chain, ds, 2, rng);
  REQUIRE(curves.size() == 2);
  // S_x(t) = exp(-t): r(t) = t identically
  for (const auto& c : curves) {
    CHECK(c.intervals[0].first == Catch::Approx(0.7).margin(1e-9));
    CHECK(c.intervals[0].second == Catch::Approx(0.7).margin(1e-9));
    CHECK(c.intervals[1].first == Catch::Approx(1.1).margin(1e-9));
    CHECK(std::isinf(c.intervals[1].second));
    CHECK(c.intervals[2].first == Catch::Approx(0.5).margin(1e-9));
    CHECK(c.intervals[2].second == Catch::Approx(2.0).margin(1e-9));
  }
}

TEST_CASE("savage-dickey pieces") {
  // numerator closed form is covered in the baseline tests; here the full
  // ratio on a synthetic chain with z draws centered away from zero
  PosteriorChain chain;
  chain.L = 3;
  Rng rng(13);
  const long S = 4000;
  chain.z.resize(S, 2);
  for (long s = 0; s < S; ++s) {
    chain.z(s, 0) = 1.0 + 0.3 * rng.normal();
    chain.z(s, 1) = -0.5 + 0.2 * rng.normal();
  }
  chain.alpha.resize(S);
  chain.alpha.setConstant(1.0);
  auto bf = savage_dickey_bf(chain);
  REQUIRE(std::isfinite(bf.bf10));
  CHECK(bf.alpha_hat == Catch::Approx(1.0));
  // posterior mass far from zero: the denominator is small, BF large
  CHECK(bf.bf10 > 1.0);

  // and a posterior tightly concentrated at zero favors the null
  PosteriorChain null_chain;
  null_chain.L = 3;
  null_chain.z.resize(S, 2);
  for (long s = 0; s < S; ++s) {
    null_chain.z(s, 0) = 0.01 * rng.normal();
    null_chain.z(s, 1) = 0.01 * rng.normal();
  }
  null_chain.alpha.resize(S);
  null_chain.alpha.setConstant(1.0);
  auto bf0 = savage_dickey_bf(null_chain);
  CHECK(bf0.bf10 < 1.0);
}
