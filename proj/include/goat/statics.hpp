#pragma once

#include <utility>

#include "goat/common.hpp"
#include "goat/linkage.hpp"

namespace goat::statics {

struct StaticsParams {
  double f_actuator = 20.0;    // N
  double friction_mu = 1.0;    // Coulomb coefficient, dimensionless
  double required_pull = 13.3; // N, load the grasp must hold
};

struct ForceState {
  Vec2 f_m{}, f_n{};  // contact forces on the object at M and N, N
  double r_f = 0.0;   // transmission ratio
  double sf = 0.0;    // safety factor r_f / required_ratio
};

// Contact forces on the object from virtual work over the 2-DoF input D.
// Both contacts act along the grasp normal: f_m toward -y, f_n toward +y.
std::pair<Vec2, Vec2> static_equilibrium(const linkage::LinkageTopology& topo,
                                         const linkage::LinkLengths& lengths,
                                         const linkage::Configuration& config,
                                         const StaticsParams& params);

double transmission_ratio(Vec2 f_m, Vec2 f_n, const StaticsParams& params);
double required_ratio(const StaticsParams& params);
double safety_factor(double r_f, double r_fmin);

ForceState analyze(const linkage::LinkageTopology& topo,
                   const linkage::LinkLengths& lengths,
                   const linkage::Configuration& config,
                   const StaticsParams& params);

}  // namespace goat::statics
