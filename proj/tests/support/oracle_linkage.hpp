#pragma once

// Closed-form reconstruction of the bundled gripper via circle intersections.
// Everything here is independent of the generic Newton solver: poses come from
// explicit two-circle constructions with hard-coded branch picks, so it can
// vouch for the data-driven solver instead of echoing it.

#include <array>
#include <optional>

#include "goat/common.hpp"

namespace oracle {

using goat::Vec2;

struct Lengths {
  double L1 = 0.0;
  double L2 = 0.0, L3 = 0.0, L4 = 0.0;   // ground offset, rocker, bar
  double L8 = 0.0, L9 = 0.0;             // coupler, finger proximal
  double L13 = 0.0, L15 = 0.0;           // bar tab, finger extension
};

inline Lengths reference_lengths() {
  return {0.0, 37.52, 24.52, 50.07, 43.26, 24.26, 10.0, 17.2};
}

struct UpperPose {
  Vec2 I, A, B, D, F, G, M;
  double rocker_angle = 0.0;  // absolute angle of A->B
  double bar_angle = 0.0;     // absolute angle of B->D
  double finger_angle = 0.0;  // absolute angle of F->G
};

std::optional<std::array<Vec2, 2>> circle_intersect(Vec2 c1, double r1, Vec2 c2,
                                                    double r2);

// Upper half posed from the shared point D. Branches: B on the +perp side of
// A->D, G on the -perp side of F->A.
std::optional<UpperPose> upper_from_d(const Lengths& L, Vec2 d);

struct FullPose {
  UpperPose up;
  UpperPose lo_mirrored;  // lower half in its own (y-flipped) frame
  Vec2 m, n;              // world fingertips
  double theta3 = 0.0, theta6 = 0.0;  // radians, opening angles
};

std::optional<FullPose> pose_from_d(const Lengths& L, Vec2 d);

struct IkPose {
  FullPose pose;
  Vec2 d;
};

// Newton on D for tip heights omega/2 + psi and -omega/2 + psi.
std::optional<IkPose> inverse(const Lengths& L, double omega, double psi,
                              Vec2 d0);

// Coarse grid seed for cold inverse solves.
std::optional<Vec2> seed_d(const Lengths& L, double omega, double psi);

// Contact force magnitudes (squeeze-positive) by virtual work with central
// finite differences over D.
std::optional<std::pair<double, double>> contact_forces(const Lengths& L,
                                                        Vec2 d, double f_act);

}  // namespace oracle
