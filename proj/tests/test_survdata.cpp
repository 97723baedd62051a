#include <catch2/catch_amalgamated.hpp>

#include "spsurv/survdata.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace spsurv;

namespace {

std::string write_tmp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("right-censor schema") {
  const auto path = write_tmp("surv_right.csv",
                              "time,cens,age,unit\n"
                              "1,1,50,a\n"
                              "3,0,60,b\n");
  DataSchema s;
  s.censoring = "right";
  s.covariates = {"age"};
  s.unit = "unit";
  const auto ds = load_dataset(path, s);
  REQUIRE(ds.n() == 2);
  CHECK(ds.obs[0].interval.exact());
  CHECK(ds.obs[0].interval.a == 1.0);
  CHECK(ds.obs[1].interval.right_censored());
  CHECK(ds.obs[1].interval.a == 3.0);
  CHECK(ds.m() == 2);
}

TEST_CASE("interval2 schema with missing right endpoint") {
  const auto path = write_tmp("surv_int2.tsv",
                              "tleft\ttright\tx\n"
                              "5\tNA\t1\n"
                              "2\t4\t0\n"
                              "7\t7\t1\n");
  DataSchema s;
  s.censoring = "interval2";
  s.time = "tleft";
  s.time2 = "tright";
  s.covariates = {"x"};
  const auto ds = load_dataset(path, s);
  REQUIRE(ds.n() == 3);
  // each row its own unit, sorted by label
  int right_censored = 0, interval = 0, exact = 0;
  for (const auto& o : ds.obs) {
    if (o.interval.exact()) ++exact;
    else if (o.interval.right_censored()) ++right_censored;
    else ++interval;
  }
  CHECK(right_censored == 1);
  CHECK(interval == 1);
  CHECK(exact == 1);
}

TEST_CASE("schema errors") {
  const auto path = write_tmp("surv_bad.csv", "time,cens\n1,1\n");
  DataSchema s;
  s.censoring = "right";
  s.covariates = {"age"};
  CHECK_THROWS_WITH(load_dataset(path, s), Catch::Matchers::ContainsSubstring("age"));

  const auto path2 = write_tmp("surv_bad2.csv", "tleft,tright\n5,3\n");
  DataSchema s2;
  s2.censoring = "interval2";
  s2.time = "tleft";
  s2.time2 = "tright";
  CHECK_THROWS_WITH(load_dataset(path2, s2), Catch::Matchers::ContainsSubstring("row 1"));
}

TEST_CASE("unknown unit label is a spatial-join error") {
  const auto path = write_tmp("surv_join.csv", "time,cens,unit\n1,1,z\n");
  DataSchema s;
  s.censoring = "right";
  s.unit = "unit";
  CHECK_THROWS_WITH(load_dataset(path, s, {"a", "b"}),
                    Catch::Matchers::ContainsSubstring("z"));
}

TEST_CASE("standardization") {
  const auto path = write_tmp("surv_std.csv",
                              "time,cens,x1,x2\n"
                              "1,1,1,0\n"
                              "2,1,2,1\n"
                              "3,0,3,0\n"
                              "4,1,2,1\n");
  DataSchema s;
  s.censoring = "right";
  s.covariates = {"x1", "x2"};
  auto ds = load_dataset(path, s);

  SECTION("enabled: mean 0, unit sample sd, metadata stored") {
    auto std_ds = standardize_covariates(ds, true);
    CHECK(std_ds.X.col(0).mean() == Catch::Approx(0.0).margin(1e-14));
    const double ss0 = (std_ds.X.col(0).array() - 0.0).square().sum() / 3.0;
    CHECK(ss0 == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(std_ds.x_mean[0] == Catch::Approx(2.0));
    // binary column: mean 0.5, sd of (0,1,0,1) = sqrt(1/3)
    CHECK(std_ds.x_mean[1] == Catch::Approx(0.5));
    CHECK(std_ds.x_sd[1] == Catch::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
    // de-standardization is the identity on the originals
    for (int i = 0; i < ds.n(); ++i)
      for (int j = 0; j < ds.p(); ++j)
        CHECK(std_ds.X(i, j) * std_ds.x_sd[j] + std_ds.x_mean[j] ==
              Catch::Approx(ds.X(i, j)).margin(1e-12));
  }

  SECTION("disabled: identity with (0,1) metadata") {
    auto id = standardize_covariates(ds, false);
    CHECK(id.x_mean[0] == 0.0);
    CHECK(id.x_sd[0] == 1.0);
    CHECK((id.X - ds.X).norm() == 0.0);
  }

  SECTION("zero-variance column named in the error") {
    const auto path2 = write_tmp("surv_zv.csv", "time,cens,flat\n1,1,3\n2,0,3\n");
    DataSchema s2;
    s2.censoring = "right";
    s2.covariates = {"flat"};
    auto ds2 = load_dataset(path2, s2);
    CHECK_THROWS_WITH(standardize_covariates(ds2, true),
                      Catch::Matchers::ContainsSubstring("flat"));
  }
}

TEST_CASE("sample sd of (1,2,3) standardizes to (-1,0,1)") {
  const auto path = write_tmp("surv_sd.csv", "time,cens,x\n1,1,1\n2,1,2\n3,1,3\n");
  DataSchema s;
  s.censoring = "right";
  s.covariates = {"x"};
  auto ds = standardize_covariates(load_dataset(path, s), true);
  CHECK(ds.x_sd[0] == Catch::Approx(1.0));
  CHECK(ds.X(0, 0) == Catch::Approx(-1.0));
  CHECK(ds.X(1, 0) == Catch::Approx(0.0).margin(1e-14));
  CHECK(ds.X(2, 0) == Catch::Approx(1.0));
}

TEST_CASE("episode expansion") {
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 14.5);
  Eigen::VectorXd x1 = Eigen::VectorXd::Constant(1, 21.3);

  SECTION("two-row subject with terminal event") {
    std::vector<EpisodeRow> rows = {{"1", 0, 192, false, x0}, {"1", 192, 400, true, x1}};
    auto out = episode_expand(rows);
    REQUIRE(out.size() == 2);
    CHECK(out[0].first.u == 0.0);
    CHECK(out[0].first.interval.a == 192.0);
    CHECK(out[0].first.interval.right_censored());
    CHECK(out[1].first.u == 192.0);
    CHECK(out[1].first.interval.exact());
    CHECK(out[1].first.interval.a == 400.0);
  }

  SECTION("single row does not expand") {
    std::vector<EpisodeRow> rows = {{"7", 0, 8, true, x0}};
    auto out = episode_expand(rows);
    REQUIRE(out.size() == 1);
    CHECK(out[0].first.interval.exact());
    CHECK(out[0].first.interval.a == 8.0);
  }

  SECTION("all censored") {
    std::vector<EpisodeRow> rows = {{"2", 0, 5, false, x0}, {"2", 5, 8, false, x1}};
    auto out = episode_expand(rows);
    REQUIRE(out.size() == 2);
    CHECK(out[0].first.interval.right_censored());
    CHECK(out[1].first.u == 5.0);
    CHECK(out[1].first.interval.right_censored());
  }

  SECTION("gap between rows is a contiguity error") {
    std::vector<EpisodeRow> rows = {{"3", 0, 5, false, x0}, {"3", 6, 8, true, x1}};
    CHECK_THROWS_WITH(episode_expand(rows), Catch::Matchers::ContainsSubstring("contiguous"));
  }

  SECTION("event on non-final row rejected") {
    std::vector<EpisodeRow> rows = {{"4", 0, 5, true, x0}, {"4", 5, 8, false, x1}};
    CHECK_THROWS_WITH(episode_expand(rows), Catch::Matchers::ContainsSubstring("non-final"));
  }

  SECTION("truncation times strictly increase within subject") {
    std::vector<EpisodeRow> rows = {
        {"5", 0, 2, false, x0}, {"5", 2, 7, false, x0}, {"5", 7, 9, true, x1}};
    auto out = episode_expand(rows);
    REQUIRE(out.size() == 3);
    for (std::size_t k = 1; k < out.size(); ++k)
      CHECK(out[k].first.u > out[k - 1].first.u);
  }
}

TEST_CASE("canonical format round trip") {
  const auto path = write_tmp("surv_rt.csv",
                              "time,cens,age,wbc,unit,xc,yc\n"
                              "1,1,44,281.0,u1,0.41,0.42\n"
                              "3,0,72,0.25,u2,0.39,0.45\n"
                              "9,1,61,0.5,u1,0.41,0.42\n");
  DataSchema s;
  s.censoring = "right";
  s.covariates = {"age", "wbc"};
  s.unit = "unit";
  s.coord_x = "xc";
  s.coord_y = "yc";
  const auto ds = load_dataset(path, s);

  const auto out = (std::filesystem::temp_directory_path() / "surv_rt_out.tsv").string();
  write_dataset(ds, out);
  const auto ds2 = load_dataset(out, canonical_schema({"age", "wbc"}));
  REQUIRE(ds2.n() == ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    CHECK(ds2.obs[i].u == ds.obs[i].u);
    CHECK(ds2.obs[i].interval.a == ds.obs[i].interval.a);
    CHECK(((std::isinf(ds2.obs[i].interval.b) && std::isinf(ds.obs[i].interval.b)) ||
           ds2.obs[i].interval.b == ds.obs[i].interval.b));
    CHECK(ds2.obs[i].unit == ds.obs[i].unit);
  }
  CHECK((ds2.X - ds.X).norm() == 0.0);
  CHECK((ds2.spatial.coords - ds.spatial.coords).norm() == 0.0);
}

TEST_CASE("adjacency loading and validation") {
  const auto adj = write_tmp("adj.tsv", "a\tb\tc\n0\t1\t0\n1\t0\t1\n0\t1\t0\n");
  auto [labels, E] = load_adjacency(adj);
  REQUIRE(labels.size() == 3);
  CHECK(E(0, 1) == 1.0);

  const auto path = write_tmp("surv_adj.csv", "time,cens,unit\n1,1,b\n2,0,a\n");
  DataSchema s;
  s.censoring = "right";
  s.unit = "unit";
  auto ds = load_dataset(path, s, labels);
  attach_adjacency(ds, E);
  CHECK(ds.spatial.kind == SpatialKind::Areal);
  // sorted by unit index: "a" (0) before "b" (1)
  CHECK(ds.obs[0].unit == 0);
  CHECK(ds.obs[1].unit == 1);

  Eigen::MatrixXd bad = E;
  bad(2, 1) = bad(1, 2) = 0.0;  // isolates region c
  CHECK_THROWS_WITH(attach_adjacency(ds, bad), Catch::Matchers::ContainsSubstring("neighbor"));
}
