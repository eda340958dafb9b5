#include "goat/statics.hpp"

#include <cmath>

namespace goat::statics {
namespace {

constexpr double kFdStep = 1e-4;  // mm, central differences over D

void check_params(const StaticsParams& p) {
  if (!(p.f_actuator > 0.0) || !(p.friction_mu > 0.0) ||
      !(p.required_pull >= 0.0))
    throw std::invalid_argument("statics parameters must be positive");
}

}  // namespace

std::pair<Vec2, Vec2> static_equilibrium(const linkage::LinkageTopology& topo,
                                         const linkage::LinkLengths& lengths,
                                         const linkage::Configuration& config,
                                         const StaticsParams& params) {
  check_params(params);
  const Vec2 m0 = config.points.at(topo.upper.tip);
  const Vec2 n0 = config.points.at(topo.lower.tip);
  if (!(m0.y > n0.y))
    throw NoContact("upper fingertip must sit above the lower fingertip");

  const Vec2 d = config.points.at(topo.actuation_point);
  auto tips_at = [&](Vec2 dp) {
    const auto c = linkage::forward_configuration(topo, lengths, dp, config);
    return std::pair<Vec2, Vec2>{c.points.at(topo.upper.tip),
                                 c.points.at(topo.lower.tip)};
  };
  const auto [m_xp, n_xp] = tips_at({d.x + kFdStep, d.y});
  const auto [m_xm, n_xm] = tips_at({d.x - kFdStep, d.y});
  const auto [m_yp, n_yp] = tips_at({d.x, d.y + kFdStep});
  const auto [m_ym, n_ym] = tips_at({d.x, d.y - kFdStep});

  const double dmy_dx = (m_xp.y - m_xm.y) / (2 * kFdStep);
  const double dmy_dy = (m_yp.y - m_ym.y) / (2 * kFdStep);
  const double dny_dx = (n_xp.y - n_xm.y) / (2 * kFdStep);
  const double dny_dy = (n_yp.y - n_ym.y) / (2 * kFdStep);

  // Virtual work for every virtual D displacement:
  //   F_act . dD + f_m_reaction . dM + f_n_reaction . dN = 0
  // with reactions on the fingers (+y at M, -y at N) collapsing to the
  // y-sensitivities only.
  const double a00 = dmy_dx, a01 = -dny_dx;
  const double a10 = dmy_dy, a11 = -dny_dy;
  const Vec2 f_act = topo.actuation_direction * params.f_actuator;
  const double b0 = -f_act.x, b1 = -f_act.y;

  const double det = a00 * a11 - a01 * a10;
  const double scale =
      std::max({std::abs(a00 * a11), std::abs(a01 * a10), 1e-300});
  if (std::abs(det) < 1e-9 * scale)
    throw SingularTransmission("contact Jacobian is rank-deficient");

  const double fm = (b0 * a11 - a01 * b1) / det;
  const double fn = (a00 * b1 - b0 * a10) / det;
  return {Vec2{0.0, -fm}, Vec2{0.0, fn}};
}

double transmission_ratio(Vec2 f_m, Vec2 f_n, const StaticsParams& params) {
  check_params(params);
  return (f_n - f_m).norm() / params.f_actuator;
}

double required_ratio(const StaticsParams& params) {
  check_params(params);
  return params.required_pull / (params.friction_mu * params.f_actuator);
}

double safety_factor(double r_f, double r_fmin) {
  if (r_fmin == 0.0) throw DivisionByZero("required ratio is zero");
  return r_f / r_fmin;
}

ForceState analyze(const linkage::LinkageTopology& topo,
                   const linkage::LinkLengths& lengths,
                   const linkage::Configuration& config,
                   const StaticsParams& params) {
  ForceState fs;
  std::tie(fs.f_m, fs.f_n) = static_equilibrium(topo, lengths, config, params);
  fs.r_f = transmission_ratio(fs.f_m, fs.f_n, params);
  fs.sf = safety_factor(fs.r_f, required_ratio(params));
  return fs;
}

}  // namespace goat::statics
