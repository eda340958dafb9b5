#include <doctest.h>

#include <cmath>

#include "goat/linkage.hpp"
#include "goat/statics.hpp"
#include "support/fixtures.hpp"
#include "support/oracle_linkage.hpp"
#include "support/oracle_statics.hpp"

using goat::Vec2;
namespace lk = goat::linkage;
namespace st = goat::statics;

namespace {
const st::StaticsParams kParams{20.0, 1.0, 13.3};
}

TEST_CASE("contact forces match the recorded width sweep") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  struct Row {
    double omega, fm, fn, rf;
  };
  const Row rows[] = {
      {38.02, 2.544983650, 0.391550024, 0.146826684},
      {80.0, 2.956536070, 1.143900208, 0.205021814},
      {128.5, 4.163040498, 1.901873777, 0.303245714},
  };
  for (const auto& r : rows) {
    CAPTURE(r.omega);
    const auto ik = lk::solve_ik(topo, L, {r.omega, fixtures::kRefPsi});
    const auto [f_m, f_n] = st::static_equilibrium(topo, L, ik.config, kParams);
    CHECK(f_m.x == 0.0);
    CHECK(f_n.x == 0.0);
    CHECK(-f_m.y == doctest::Approx(r.fm).epsilon(1e-4));
    CHECK(f_n.y == doctest::Approx(r.fn).epsilon(1e-4));
    CHECK(st::transmission_ratio(f_m, f_n, kParams) ==
          doctest::Approx(r.rf).epsilon(1e-4));
  }
}

TEST_CASE("virtual-work forces equal the full rigid-body balance") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  int tested = 0;
  for (double psi : {0.0, 6.0, 12.0}) {
    for (int i = 0; i < 18; ++i) {
      const double omega = 40.0 + i * (125.0 - 40.0) / 17.0;
      CAPTURE(psi);
      CAPTURE(omega);
      const auto ik = lk::solve_ik(topo, L, {omega, psi});
      const auto [f_m, f_n] = st::static_equilibrium(topo, L, ik.config, kParams);
      const auto [o_m, o_n] =
          oracle::equilibrium_forces(topo, L, ik.config, kParams);
      CHECK(f_m.y == doctest::Approx(o_m.y).epsilon(1e-6));
      CHECK(f_n.y == doctest::Approx(o_n.y).epsilon(1e-6));
      ++tested;
    }
  }
  CHECK(tested >= 50);
}

TEST_CASE("virtual-work residual vanishes for admissible displacements") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  const auto ik = lk::solve_ik(topo, L, {90.0, fixtures::kRefPsi});
  const auto [f_m, f_n] = st::static_equilibrium(topo, L, ik.config, kParams);

  const Vec2 d = ik.config.points.at("D");
  const Vec2 f_act = topo.actuation_direction * kParams.f_actuator;
  for (const Vec2 delta : {Vec2{1.0, 0.0}, Vec2{0.0, 1.0}, Vec2{0.6, -0.8}}) {
    const double h = 1e-4;
    const auto plus = lk::forward_configuration(
        topo, L, d + delta * h, ik.config);
    const auto minus = lk::forward_configuration(
        topo, L, d - delta * (h), ik.config);
    const Vec2 dm = (plus.points.at("M") - minus.points.at("M")) * (1 / (2 * h));
    const Vec2 dn = (plus.points.at("N") - minus.points.at("N")) * (1 / (2 * h));
    const double lhs = f_act.dot(delta);
    const double rhs = f_m.dot(dm) + f_n.dot(dn);
    // Zero-work displacements are checked absolutely against the force scale.
    CHECK(std::abs(lhs - rhs) / std::max(std::abs(lhs), f_act.norm()) < 1e-6);
  }
}

TEST_CASE("centered grasps load both fingers equally") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  const auto ik = lk::solve_ik(topo, L, {60.0, 0.0});
  const st::StaticsParams p{10.0, 1.0, 13.3};
  const auto [f_m, f_n] = st::static_equilibrium(topo, L, ik.config, p);
  CHECK(f_m.norm() == doctest::Approx(f_n.norm()).epsilon(1e-8));
  CHECK(f_m.y < 0.0);
  CHECK(f_n.y > 0.0);
}

TEST_CASE("statics is linear in the actuator force") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  const auto ik = lk::solve_ik(topo, L, {75.0, fixtures::kRefPsi});
  const auto a = st::analyze(topo, L, ik.config, {20.0, 1.0, 13.3});
  const auto b = st::analyze(topo, L, ik.config, {40.0, 1.0, 13.3});
  CHECK(b.f_m.y == doctest::Approx(2.0 * a.f_m.y).epsilon(1e-9));
  CHECK(b.f_n.y == doctest::Approx(2.0 * a.f_n.y).epsilon(1e-9));
  CHECK(b.r_f == doctest::Approx(a.r_f).epsilon(1e-9));
  // The ratio is force-invariant but the required ratio halves, so sf doubles.
  CHECK(b.sf == doctest::Approx(2.0 * a.sf).epsilon(1e-9));
}

TEST_CASE("ratio helpers follow their definitions") {
  CHECK(st::transmission_ratio({0.0, -5.0}, {0.0, 5.0}, {10.0, 1.0, 13.3}) ==
        doctest::Approx(1.0));
  CHECK(st::transmission_ratio({0.0, 2.0}, {0.0, 2.0}, kParams) ==
        doctest::Approx(0.0));
  CHECK(st::required_ratio({20.0, 1.0, 13.3}) == doctest::Approx(0.665));
  CHECK(st::required_ratio({20.0, 2.0, 13.3}) == doctest::Approx(0.3325));
  CHECK(st::required_ratio({20.0, 1.0, 0.0}) == doctest::Approx(0.0));
  CHECK(st::safety_factor(0.665, 0.665) == doctest::Approx(1.0));
  CHECK(st::safety_factor(2.3275, 0.665) == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(st::safety_factor(2.327, 0.665) == doctest::Approx(3.5).epsilon(1e-3));
  CHECK(st::safety_factor(0.0, 0.665) == doctest::Approx(0.0));
  CHECK_THROWS_AS(st::safety_factor(1.0, 0.0), goat::DivisionByZero);
}

TEST_CASE("transmission grows toward the wide-open singularity") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  double prev = 0.0;
  for (double omega : {100.0, 110.0, 120.0, 125.0, 128.5, 129.8}) {
    CAPTURE(omega);
    const auto ik = lk::solve_ik(topo, L, {omega, fixtures::kRefPsi});
    const auto fs = st::analyze(topo, L, ik.config, kParams);
    CHECK(fs.r_f > prev);
    prev = fs.r_f;
  }
}

TEST_CASE("crossed fingertips cannot carry a pinch") {
  const auto& topo = fixtures::topology();
  const auto& L = fixtures::reference_design();
  auto ik = lk::solve_ik(topo, L, {60.0, fixtures::kRefPsi});
  auto cfg = ik.config;
  std::swap(cfg.points.at("M"), cfg.points.at("N"));
  CHECK_THROWS_AS(st::static_equilibrium(topo, L, cfg, kParams),
                  goat::NoContact);
}
