#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "goat/environment.hpp"

namespace env = goat::env;
using env::BivariateLogNormal;
using env::HoldRecord;
using env::RectRegion;

namespace {

BivariateLogNormal wide_model() {
  BivariateLogNormal m;
  m.mu = {4.2, 3.6};
  m.sigma = {0.5, 0.6};
  m.rho = 0.4;
  return m;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::abs(want);
}

}  // namespace

TEST_CASE("log-domain fit recovers the generating parameters") {
  const auto target = wide_model();
  SUBCASE("ten thousand holds, two percent") {
    const auto holds = env::synthetic_holds(10000, 42, target);
    const auto fit =
        env::fit_lognormal(holds, env::WidthFrom::kBothOrientations);
    CHECK(rel_err(fit.mu[0], target.mu[0]) < 0.02);
    CHECK(rel_err(fit.mu[1], target.mu[1]) < 0.02);
    CHECK(rel_err(fit.sigma[0], target.sigma[0]) < 0.02);
    CHECK(rel_err(fit.sigma[1], target.sigma[1]) < 0.02);
    CHECK(rel_err(fit.rho, target.rho) < 0.02);
  }
  SUBCASE("a hundred thousand holds, sub-percent") {
    const auto holds = env::synthetic_holds(100000, 42, target);
    const auto fit =
        env::fit_lognormal(holds, env::WidthFrom::kBothOrientations);
    CHECK(rel_err(fit.mu[0], target.mu[0]) < 0.007);
    CHECK(rel_err(fit.mu[1], target.mu[1]) < 0.007);
    CHECK(rel_err(fit.sigma[0], target.sigma[0]) < 0.007);
    CHECK(rel_err(fit.sigma[1], target.sigma[1]) < 0.007);
    CHECK(rel_err(fit.rho, target.rho) < 0.007);
  }
}

TEST_CASE("fit rejects degenerate inputs") {
  CHECK_THROWS_AS(env::fit_lognormal({{10, 20, 30}, {11, 21, 31}},
                                     env::WidthFrom::kWidthOnly),
                  goat::TooFewRecords);
  CHECK_THROWS_AS(env::fit_lognormal({{10, 20, 30}, {-1, 21, 31}, {9, 19, 29}},
                                     env::WidthFrom::kWidthOnly),
                  goat::NonPositiveValue);
  CHECK_THROWS_AS(env::fit_lognormal({{10, 20, 30}, {10, 20, 30}, {10, 20, 30}},
                                     env::WidthFrom::kWidthOnly),
                  goat::DegenerateVariance);
}

TEST_CASE("fit matches hand-computed statistics on a tiny set") {
  const double e = std::exp(1.0);
  const std::vector<HoldRecord> recs = {
      {std::pow(e, 1.0), 1.0, std::pow(e, 2.0)},
      {std::pow(e, 2.0), 1.0, std::pow(e, 4.0)},
      {std::pow(e, 3.0), 1.0, std::pow(e, 5.0)},
  };
  const auto fit = env::fit_lognormal(recs, env::WidthFrom::kWidthOnly);
  CHECK(fit.mu[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.mu[1] == doctest::Approx(11.0 / 3.0).epsilon(1e-12));
  CHECK(fit.sigma[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(fit.sigma[1] == doctest::Approx(std::sqrt(14.0) / 3.0).epsilon(1e-12));
  CHECK(fit.rho == doctest::Approx(3.0 * std::sqrt(3.0) / std::sqrt(28.0))
                       .epsilon(1e-12));
}

TEST_CASE("both-orientations policy folds lengths into the width axis") {
  // Lengths chosen far from widths: the policy must shift the fitted mean.
  std::vector<HoldRecord> recs;
  for (int i = 0; i < 200; ++i) {
    const double j = 1.0 + 0.01 * i;
    recs.push_back({20.0 * j, 80.0 * j, 30.0 * j});
  }
  const auto narrow = env::fit_lognormal(recs, env::WidthFrom::kWidthOnly);
  const auto both = env::fit_lognormal(recs, env::WidthFrom::kBothOrientations);
  CHECK(both.mu[0] > narrow.mu[0]);
  CHECK(both.mu[0] ==
        doctest::Approx(narrow.mu[0] + 0.5 * std::log(4.0)).epsilon(1e-9));
  CHECK(both.mu[1] == doctest::Approx(narrow.mu[1]).epsilon(1e-12));
}

TEST_CASE("density follows the closed form") {
  const auto m = wide_model();
  CHECK(env::pdf(m, -1.0, 10.0) == 0.0);
  CHECK(env::pdf(m, 10.0, 0.0) == 0.0);

  const double at_mode = 1.0 / (2.0 * M_PI * m.sigma[0] * m.sigma[1] *
                                std::sqrt(1.0 - m.rho * m.rho) *
                                std::exp(m.mu[0] + m.mu[1]));
  CHECK(env::pdf(m, std::exp(m.mu[0]), std::exp(m.mu[1])) ==
        doctest::Approx(at_mode).epsilon(1e-12));

  const RectRegion all{1e-3, std::exp(m.mu[0] + 8.0 * m.sigma[0]), 1e-3,
                       std::exp(m.mu[1] + 8.0 * m.sigma[1])};
  CHECK(env::cdf_rect_riemann_serial(m, all, 4000000) ==
        doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("riemann rectangle mass behaves like a measure") {
  const auto m = wide_model();
  CHECK(env::cdf_rect_riemann(m, {50.0, 50.0, 10.0, 60.0}, 4000) == 0.0);

  const RectRegion small{40.0, 90.0, 20.0, 50.0};
  const RectRegion bigger{35.0, 100.0, 15.0, 60.0};
  const double ps = env::cdf_rect_riemann(m, small, 4000);
  const double pb = env::cdf_rect_riemann(m, bigger, 4000);
  CHECK(ps > 0.0);
  CHECK(pb >= ps);
  CHECK(pb <= 1.0 + 1e-9);

  // Refinement settles: each doubling moves the estimate less than the last.
  const double p1 = env::cdf_rect_riemann(m, small, 1000);
  const double p2 = env::cdf_rect_riemann(m, small, 4000);
  const double p3 = env::cdf_rect_riemann(m, small, 16000);
  CHECK(std::abs(p3 - p2) < std::abs(p2 - p1));
}

TEST_CASE("riemann and monte-carlo estimates agree") {
  const auto m = wide_model();
  const RectRegion regions[] = {
      {40.0, 90.0, 20.0, 50.0},  {10.0, 60.0, 5.0, 30.0},
      {66.0, 67.0, 36.0, 37.0},  {1.0, 1000.0, 1.0, 1000.0},
      {100.0, 250.0, 40.0, 160.0},
  };
  for (const auto& r : regions) {
    CAPTURE(r.omega_lo);
    const double pr = env::cdf_rect_riemann(m, r, 40000);
    const double pm = env::cdf_rect_montecarlo(m, r, 1000000, 2024);
    CHECK(std::abs(pr - pm) < 0.01);
  }
}

TEST_CASE("monte-carlo draws are seed-deterministic and additive") {
  const auto m = wide_model();
  const RectRegion r{30.0, 120.0, 10.0, 80.0};
  const double a = env::cdf_rect_montecarlo(m, r, 200000, 7);
  const double b = env::cdf_rect_montecarlo(m, r, 200000, 7);
  CHECK(a == b);
  const double c = env::cdf_rect_montecarlo(m, r, 200000, 8);
  CHECK(a != c);

  const RectRegion left{30.0, 70.0, 10.0, 80.0};
  const RectRegion right{70.0, 120.0, 10.0, 80.0};
  const double pl = env::cdf_rect_montecarlo(m, left, 200000, 7);
  const double pr = env::cdf_rect_montecarlo(m, right, 200000, 7);
  // Same seed means the same draws, so the split can only differ by boundary
  // ties (width exactly 70), which double-count.
  CHECK(pl + pr == doctest::Approx(a).epsilon(1e-7));

  const double full = env::cdf_rect_montecarlo(
      m, {1e-6, 1e6, 1e-6, 1e6}, 200000, 7);
  CHECK(full == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("serial reference implementations match the parallel kernels") {
  const auto m = wide_model();
  const RectRegion r{38.0, 128.5, 10.0, 90.0};
  CHECK(env::cdf_rect_riemann(m, r, 4000) ==
        env::cdf_rect_riemann_serial(m, r, 4000));
  CHECK(env::cdf_rect_montecarlo(m, r, 123457, 99) ==
        env::cdf_rect_montecarlo_serial(m, r, 123457, 99));
}

TEST_CASE("quantile pairs line up for log-normal data") {
  const auto holds = env::synthetic_holds(500, 5, wide_model());
  std::vector<double> widths;
  for (const auto& h : holds) widths.push_back(h.width);
  const auto pts = env::qq_points(widths);
  REQUIRE(pts.size() == widths.size());

  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = static_cast<double>(pts.size());
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double cov = sxy / n - sx / n * (sy / n);
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  const double r2 = cov * cov / (vx * vy);
  CHECK(r2 > 0.99);

  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].first > pts[i - 1].first);
    CHECK(pts[i].second >= pts[i - 1].second);
  }
}

TEST_CASE("quantile pairs handle edge inputs") {
  CHECK(env::qq_points({3.0, 1.0, 2.0}).size() == 3);
  CHECK_THROWS_AS(env::qq_points({1.0, 2.0}), goat::TooFewRecords);
  CHECK_THROWS_AS(env::qq_points({1.0, -2.0, 3.0}), goat::NonPositiveValue);
  const auto flat = env::qq_points({5.0, 5.0, 5.0, 5.0});
  for (const auto& [x, y] : flat) CHECK(y == doctest::Approx(std::log(5.0)));
}

TEST_CASE("normal quantile helper hits reference values") {
  CHECK(env::inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(env::inverse_normal_cdf(0.975) ==
        doctest::Approx(1.959963985).epsilon(1e-7));
  CHECK(env::inverse_normal_cdf(0.025) ==
        doctest::Approx(-1.959963985).epsilon(1e-7));
  CHECK_THROWS_AS(env::inverse_normal_cdf(0.0), std::invalid_argument);
}

TEST_CASE("CSV ingestion validates structure and positivity") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path();
  const auto good = dir / "goat_holds_good.csv";
  {
    std::ofstream out(good);
    out << "width_mm,length_mm,height_mm\n"
        << "52.1,80.4,31.0\n"
        << "40.0,44.0,22.5\n"
        << "61.7,95.2,48.0\n";
  }
  const auto recs = env::load_holds_csv(good.string());
  REQUIRE(recs.size() == 3);
  CHECK(recs[1].length == doctest::Approx(44.0));
  CHECK_NOTHROW(env::fit_lognormal(recs, env::WidthFrom::kBothOrientations));

  const auto bad_header = dir / "goat_holds_bad1.csv";
  {
    std::ofstream out(bad_header);
    out << "w,l,h\n1,2,3\n";
  }
  CHECK_THROWS_AS(env::load_holds_csv(bad_header.string()), goat::MalformedSpec);

  const auto bad_value = dir / "goat_holds_bad2.csv";
  {
    std::ofstream out(bad_value);
    out << "width_mm,length_mm,height_mm\n10,-4,3\n";
  }
  CHECK_THROWS_AS(env::load_holds_csv(bad_value.string()),
                  goat::NonPositiveValue);
}

TEST_CASE("model serialization round-trips") {
  const auto m = wide_model();
  const auto back = env::model_from_json(env::model_to_json(m));
  CHECK(back.mu[0] == m.mu[0]);
  CHECK(back.mu[1] == m.mu[1]);
  CHECK(back.sigma[0] == m.sigma[0]);
  CHECK(back.sigma[1] == m.sigma[1]);
  CHECK(back.rho == m.rho);
  CHECK_THROWS_AS(env::model_from_json("{\"mu\": [1, 2]}"), goat::MalformedSpec);
  CHECK_THROWS_AS(
      env::model_from_json(
          "{\"mu\": [1, 2], \"sigma\": [0.5, -1], \"rho\": 0.2}"),
      goat::DegenerateVariance);
}
