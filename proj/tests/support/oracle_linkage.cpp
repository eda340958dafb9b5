#include "oracle_linkage.hpp"

#include <cmath>

namespace oracle {
namespace {

constexpr double kGroundOffsetAngle = goat::deg2rad(45.0);
constexpr double kTabAngle = goat::deg2rad(-105.0);

Vec2 flip(Vec2 v) { return {v.x, -v.y}; }

}  // namespace

std::optional<std::array<Vec2, 2>> circle_intersect(Vec2 c1, double r1, Vec2 c2,
                                                    double r2) {
  const Vec2 delta = c2 - c1;
  const double d = delta.norm();
  if (d < 1e-12 || d > r1 + r2 || d < std::abs(r1 - r2)) return std::nullopt;
  const double a = (r1 * r1 - r2 * r2 + d * d) / (2 * d);
  const double h = std::sqrt(std::max(r1 * r1 - a * a, 0.0));
  const Vec2 u = delta * (1.0 / d);
  const Vec2 p = c1 + u * a;
  const Vec2 per{-u.y, u.x};
  return std::array<Vec2, 2>{p + per * h, p - per * h};
}

std::optional<UpperPose> upper_from_d(const Lengths& L, Vec2 d) {
  UpperPose P;
  P.I = {0.0, L.L1 / 2};
  P.A = P.I + goat::unit_dir(kGroundOffsetAngle) * L.L2;
  P.D = d;

  const auto cb = circle_intersect(P.A, L.L3, d, L.L4);
  if (!cb) return std::nullopt;
  P.B = (*cb)[0];
  P.bar_angle = std::atan2(d.y - P.B.y, d.x - P.B.x);
  P.F = P.B + goat::unit_dir(P.bar_angle + kTabAngle) * L.L13;

  const auto cg = circle_intersect(P.F, L.L9, P.A, L.L8);
  if (!cg) return std::nullopt;
  P.G = (*cg)[1];
  P.finger_angle = std::atan2(P.G.y - P.F.y, P.G.x - P.F.x);
  P.M = P.F + goat::unit_dir(P.finger_angle) * (L.L9 + L.L15);
  P.rocker_angle = std::atan2(P.B.y - P.A.y, P.B.x - P.A.x);
  return P;
}

std::optional<FullPose> pose_from_d(const Lengths& L, Vec2 d) {
  const auto up = upper_from_d(L, d);
  const auto lo = upper_from_d(L, flip(d));
  if (!up || !lo) return std::nullopt;
  FullPose P;
  P.up = *up;
  P.lo_mirrored = *lo;
  P.m = up->M;
  P.n = flip(lo->M);
  P.theta3 = goat::wrap_angle(up->rocker_angle + M_PI / 2);
  // The lower rocker's world angle is the negated mirrored-frame angle.
  P.theta6 = -goat::wrap_angle(-lo->rocker_angle - M_PI / 2);
  return P;
}

std::optional<IkPose> inverse(const Lengths& L, double omega, double psi,
                              Vec2 d0) {
  const double my = omega / 2 + psi;
  const double ny = -omega / 2 + psi;
  Vec2 d = d0;
  for (int it = 0; it < 80; ++it) {
    const auto p = pose_from_d(L, d);
    if (!p) return std::nullopt;
    const Vec2 r{p->m.y - my, p->n.y - ny};
    if (r.norm() < 1e-12) return IkPose{*p, d};
    const double h = 1e-7;
    const auto px = pose_from_d(L, {d.x + h, d.y});
    const auto py = pose_from_d(L, {d.x, d.y + h});
    if (!px || !py) return std::nullopt;
    const double j00 = (px->m.y - p->m.y) / h, j01 = (py->m.y - p->m.y) / h;
    const double j10 = (px->n.y - p->n.y) / h, j11 = (py->n.y - p->n.y) / h;
    const double det = j00 * j11 - j01 * j10;
    if (std::abs(det) < 1e-14) return std::nullopt;
    const Vec2 step{(-r.x * j11 + r.y * j01) / det,
                    (-r.y * j00 + r.x * j10) / det};
    double lam = 1.0;
    const double n0 = r.norm();
    bool ok = false;
    while (lam > 1e-5) {
      const auto pt = pose_from_d(L, d + step * lam);
      if (pt && Vec2{pt->m.y - my, pt->n.y - ny}.norm() < n0) {
        ok = true;
        break;
      }
      lam *= 0.5;
    }
    if (!ok) return std::nullopt;
    d = d + step * lam;
  }
  return std::nullopt;
}

std::optional<Vec2> seed_d(const Lengths& L, double omega, double psi) {
  const double my = omega / 2 + psi;
  const double ny = -omega / 2 + psi;
  std::optional<Vec2> best;
  double best_r = 30.0;  // beyond this the Newton basin is hopeless anyway
  for (int ix = 0; ix <= 60; ++ix) {
    for (int iy = 0; iy <= 48; ++iy) {
      const Vec2 d{-60.0 + 150.0 * ix / 60.0, -60.0 + 120.0 * iy / 48.0};
      const auto p = pose_from_d(L, d);
      if (!p) continue;
      const double r = std::abs(p->m.y - my) + std::abs(p->n.y - ny);
      if (r < best_r) {
        best_r = r;
        best = d;
      }
    }
  }
  return best;
}

std::optional<std::pair<double, double>> contact_forces(const Lengths& L,
                                                        Vec2 d, double f_act) {
  const double h = 1e-5;
  const auto xp = pose_from_d(L, {d.x + h, d.y});
  const auto xm = pose_from_d(L, {d.x - h, d.y});
  const auto yp = pose_from_d(L, {d.x, d.y + h});
  const auto ym = pose_from_d(L, {d.x, d.y - h});
  if (!xp || !xm || !yp || !ym) return std::nullopt;
  const double dmy_dx = (xp->m.y - xm->m.y) / (2 * h);
  const double dmy_dy = (yp->m.y - ym->m.y) / (2 * h);
  const double dny_dx = (xp->n.y - xm->n.y) / (2 * h);
  const double dny_dy = (yp->n.y - ym->n.y) / (2 * h);
  // Actuator pulls along -x; reactions +y on the upper finger, -y on the lower.
  const double a00 = dmy_dx, a01 = -dny_dx;
  const double a10 = dmy_dy, a11 = -dny_dy;
  const double b0 = f_act, b1 = 0.0;
  const double det = a00 * a11 - a01 * a10;
  if (std::abs(det) < 1e-14) return std::nullopt;
  return std::pair<double, double>{(b0 * a11 - a01 * b1) / det,
                                   (a00 * b1 - b0 * a10) / det};
}

}  // namespace oracle
