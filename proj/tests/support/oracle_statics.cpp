#include "oracle_statics.hpp"

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using goat::Vec2;
namespace lk = goat::linkage;

std::pair<Vec2, Vec2> equilibrium_forces(const lk::LinkageTopology& topo,
                                         const lk::LinkLengths& lengths,
                                         const lk::Configuration& config,
                                         const goat::statics::StaticsParams& p) {
  const auto pose =
      lk::pose_from_angles(topo, lengths, lk::body_angle_vector(topo, config));
  const int nj = static_cast<int>(topo.joints.size());
  const int nb = static_cast<int>(topo.moving_bodies.size());
  const int nu = 2 * nj + 2;
  if (3 * nb != nu)
    throw std::logic_error("equilibrium oracle needs 3*moving == 2*joints + 2");

  std::vector<int> row_base(topo.bodies.size(), -1);
  for (int i = 0; i < nb; ++i) row_base[topo.moving_bodies[i]] = 3 * i;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nu, nu);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nu);

  auto add_force = [&](int body, Vec2 at, int col, double fx_coef,
                       double fy_coef) {
    const int r = row_base[body];
    if (r < 0) return;  // ground absorbs its reactions
    const Vec2 o = pose.origin[body];
    A(r + 0, col) += fx_coef;
    A(r + 1, col + 1) += fy_coef;
    A(r + 2, col) += -(at.y - o.y) * fx_coef;
    A(r + 2, col + 1) += (at.x - o.x) * fy_coef;
  };

  for (int j = 0; j < nj; ++j) {
    const auto& jt = topo.joints[j];
    const Vec2 w = lk::world_point(topo, lengths, pose,
                                   {jt.body_a, jt.point_a});
    add_force(jt.body_b, w, 2 * j, 1.0, 1.0);   // pin force a -> b
    add_force(jt.body_a, w, 2 * j, -1.0, -1.0); // reaction b -> a
  }

  const Vec2 m = config.points.at(topo.upper.tip);
  const Vec2 n = config.points.at(topo.lower.tip);
  const auto& mref = topo.named_points.at(topo.upper.tip);
  const auto& nref = topo.named_points.at(topo.lower.tip);
  {
    // Column 2*nj holds f_m's magnitude: +y reaction on the upper finger.
    const int r = row_base[mref.body];
    const Vec2 o = pose.origin[mref.body];
    A(r + 1, 2 * nj) += 1.0;
    A(r + 2, 2 * nj) += (m.x - o.x);
  }
  {
    const int r = row_base[nref.body];
    const Vec2 o = pose.origin[nref.body];
    A(r + 1, 2 * nj + 1) += -1.0;
    A(r + 2, 2 * nj + 1) += -(n.x - o.x);
  }

  const auto& dref = topo.named_points.at(topo.actuation_point);
  const Vec2 d = config.points.at(topo.actuation_point);
  const Vec2 f_act = topo.actuation_direction * p.f_actuator;
  {
    const int r = row_base[dref.body];
    const Vec2 o = pose.origin[dref.body];
    rhs(r + 0) -= f_act.x;
    rhs(r + 1) -= f_act.y;
    rhs(r + 2) -= (d.x - o.x) * f_act.y - (d.y - o.y) * f_act.x;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw std::runtime_error("equilibrium oracle: singular balance system");
  const Eigen::VectorXd x = lu.solve(rhs);
  if ((A * x - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
    throw std::runtime_error("equilibrium oracle: balance residual too large");

  const double fm = x(2 * nj);
  const double fn = x(2 * nj + 1);
  return {Vec2{0.0, -fm}, Vec2{0.0, fn}};
}

}  // namespace oracle
