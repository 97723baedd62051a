#include <catch2/catch_amalgamated.hpp>

#include "spsurv/baseline.hpp"
#include "spsurv/math/rng.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>

using namespace spsurv;

namespace {

CenteringFamily fam(Family f, double t1 = 0.0, double t2 = 0.0) {
  CenteringFamily c;
  c.tag = f;
  c.theta << t1, t2;
  return c;
}

}  // namespace

TEST_CASE("centering families at theta = 0, t = 1") {
  CHECK(centering_eval(fam(Family::LogLogistic), 1.0).S == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(centering_eval(fam(Family::Weibull), 1.0).S ==
        Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(centering_eval(fam(Family::LogNormal), 1.0).S == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("centering density is the negative survival derivative") {
  const double h = 1e-5;
  for (Family f : {Family::LogLogistic, Family::LogNormal, Family::Weibull}) {
    for (double t : {0.3, 1.0, 2.7}) {
      const auto c = fam(f, 0.3, -0.2);
      const double fd =
          -(centering_eval(c, t + h).S - centering_eval(c, t - h).S) / (2.0 * h);
      CHECK(centering_eval(c, t).f == Catch::Approx(fd).margin(1e-8));
    }
  }
}

TEST_CASE("centering domain errors") {
  CHECK_THROWS_AS(centering_eval(fam(Family::Weibull), 0.0), std::domain_error);
  CHECK_THROWS_AS(centering_eval(fam(Family::Weibull), -1.0), std::domain_error);
  CHECK_THROWS_AS(centering_eval(fam(Family::Weibull, 0.0, 1e4), 2.0), std::domain_error);
}

TEST_CASE("weights/z round trip") {
  Eigen::VectorXd w(3);
  w << 0.5, 0.3, 0.2;
  const Eigen::VectorXd z = z_from_weights(w);
  CHECK(z[0] == Catch::Approx(std::log(2.5)).epsilon(1e-12));
  CHECK(z[1] == Catch::Approx(std::log(1.5)).epsilon(1e-12));
  const Eigen::VectorXd w2 = weights_from_z(z);
  for (int j = 0; j < 3; ++j) CHECK(w2[j] == Catch::Approx(w[j]).margin(1e-14));

  const Eigen::VectorXd wu = weights_from_z(Eigen::VectorXd::Zero(4));
  for (int j = 0; j < 5; ++j) CHECK(wu[j] == Catch::Approx(0.2).margin(1e-15));

  Eigen::VectorXd wbad(2);
  wbad << 1.0, 0.0;
  CHECK_THROWS_AS(z_from_weights(wbad), std::domain_error);
}

TEST_CASE("Bernstein identity: uniform weights reproduce the centering family") {
  for (Family f : {Family::LogLogistic, Family::LogNormal, Family::Weibull}) {
    for (int L : {1, 2, 5, 15}) {
      auto state = TbpState::uniform(L, 1.0, fam(f, 0.2, 0.1));
      double maxerr = 0.0;
      for (double t = 0.05; t < 12.0; t += 0.05) {
        const auto b = centering_eval(state.family, t);
        const auto s = tbp_eval(state, t);
        maxerr = std::max(maxerr, std::abs(s.S - b.S));
      }
      CHECK(maxerr < 1e-12);
    }
  }
}

TEST_CASE("TBP closed-form examples") {
  // L = 2, w = (1, 0) is Beta(1,2): S0 = 1 - (1 - x)^2 at x = S_theta
  auto state = TbpState::uniform(2, 1.0, fam(Family::LogLogistic));
  state.w << 1.0 - 1e-12, 1e-12;  // strictly positive simplex
  const auto r = tbp_eval(state, 1.0);  // S_theta(1) = 0.5
  CHECK(r.S == Catch::Approx(0.75).margin(1e-9));

  // L = 1 is the identity case
  auto one = TbpState::uniform(1, 1.0, fam(Family::Weibull));
  CHECK(tbp_eval(one, 2.0).S == Catch::Approx(centering_eval(one.family, 2.0).S).epsilon(1e-14));
}

TEST_CASE("TBP beta basis agrees with the regularized incomplete beta") {
  for (int L : {2, 5, 15}) {
    BetaBasisTables tables(L);
    std::vector<double> cdf, pdf;
    for (double x : {1e-12, 1e-4, 0.113, 0.5, 0.92, 1.0 - 1e-7}) {
      tables.eval(x, cdf, pdf);
      for (int j = 1; j <= L; ++j) {
        const double ref_cdf = boost::math::ibeta(j, L - j + 1.0, x);
        const double ref_pdf = boost::math::ibeta_derivative(j, L - j + 1.0, x);
        CHECK(cdf[j - 1] == Catch::Approx(ref_cdf).epsilon(1e-12).margin(1e-280));
        CHECK(pdf[j - 1] == Catch::Approx(ref_pdf).epsilon(1e-10).margin(1e-280));
      }
    }
  }
}

TEST_CASE("TBP density integrates to 1 - S0(T)") {
  Rng rng(7);
  auto state = TbpState::uniform(8, 2.0, fam(Family::Weibull, 0.1, 0.2));
  Eigen::VectorXd z(7);
  for (int j = 0; j < 7; ++j) z[j] = 0.5 * rng.normal();
  state.set_z(z);
  const double T = 30.0;
  // Simpson rule on (tiny, T)
  const int N = 20000;
  const double h = (T - 1e-8) / N;
  double integral = 0.0;
  for (int k = 0; k <= N; ++k) {
    const double t = 1e-8 + k * h;
    const double wt = (k == 0 || k == N) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    integral += wt * tbp_eval(state, t).f;
  }
  integral *= h / 3.0;
  CHECK(integral == Catch::Approx(1.0 - tbp_eval(state, T).S).margin(1e-4));
}

TEST_CASE("TBP density matches finite differences of S0") {
  auto state = TbpState::uniform(5, 2.0, fam(Family::LogLogistic, -0.1, 0.3));
  Eigen::VectorXd z(4);
  z << 0.4, -0.3, 0.2, 0.1;
  state.set_z(z);
  const double h = 1e-5;
  for (double t : {0.4, 1.1, 3.3}) {
    const double fd = -(tbp_eval(state, t + h).S - tbp_eval(state, t - h).S) / (2.0 * h);
    CHECK(tbp_eval(state, t).f == Catch::Approx(fd).margin(1e-8));
  }
}

TEST_CASE("Dirichlet log prior") {
  auto s2 = TbpState::uniform(2, 1.0, fam(Family::Weibull));
  CHECK(tbp_log_prior(s2, false) == Catch::Approx(0.0).margin(1e-14));

  auto s3 = TbpState::uniform(3, 2.0, fam(Family::Weibull));
  CHECK(tbp_log_prior(s3, false) == Catch::Approx(std::log(120.0 / 27.0)).epsilon(1e-12));

  auto bad = TbpState::uniform(3, -1.0, fam(Family::Weibull));
  CHECK_THROWS_AS(tbp_log_prior(bad, false), std::domain_error);
}

TEST_CASE("z-coordinate prior includes the softmax Jacobian") {
  // direct numerical check of the Jacobian via finite differences at L = 3
  auto s = TbpState::uniform(3, 1.5, fam(Family::Weibull));
  Eigen::VectorXd z(2);
  z << 0.3, -0.6;
  s.set_z(z);
  const double lp = tbp_log_prior(s, true);
  // against: log Dir(w) + log prod w_j
  double sum_logw = 0.0;
  for (int j = 0; j < 3; ++j) sum_logw += std::log(s.w[j]);
  const double expect = tbp_log_prior(s, false) + sum_logw;
  CHECK(lp == Catch::Approx(expect).epsilon(1e-13));
}

TEST_CASE("Savage-Dickey numerator closed form") {
  CHECK(std::exp(tbp_z_prior_at_zero_log(1.0, 2)) == Catch::Approx(0.25).epsilon(1e-13));
  // increases in alpha for fixed L >= 2
  double prev = tbp_z_prior_at_zero_log(1.0, 3);
  for (double a : {2.0, 4.0, 8.0, 16.0}) {
    const double cur = tbp_z_prior_at_zero_log(a, 3);
    CHECK(cur > prev);
    prev = cur;
  }
}
