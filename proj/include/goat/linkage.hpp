#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "goat/common.hpp"

namespace goat::linkage {

// A body-frame point expressed as a sum of link-scaled unit vectors. Keeping
// points free of constant offsets means every world position scales exactly
// with the link-length vector, which the multi-start scaling relies on.
struct PointTerm {
  int link = -1;       // index into LinkageTopology::link_names
  double angle = 0.0;  // radians, in the body frame
  double scale = 1.0;
};
using PointForm = std::vector<PointTerm>;  // empty form = body origin

struct Body {
  std::string name;
  bool ground = false;
  std::vector<int> links;  // links physically belonging to this member
  std::map<std::string, PointForm> points;
};

struct Joint {
  std::string name;
  int body_a = -1;
  int body_b = -1;
  std::string point_a;
  std::string point_b;
  bool cut = false;  // excluded from the spanning tree; closed by a residual
};

struct PointRef {
  int body = -1;
  std::string point;
};

struct ThetaDef {
  std::string name;
  int body = -1;
  double datum = 0.0;  // radians; theta = sign * wrap(body_angle - datum)
  double sign = 1.0;
};

struct HalfDef {
  std::vector<int> bodies;
  std::string tip;  // key into named_points
  PointRef d_point;
};

struct TreeEdge {
  int joint = -1;
  int parent = -1;
  int child = -1;
  bool parent_is_a = false;
};

struct LinkageTopology {
  std::string name;
  std::vector<std::string> link_names;
  std::vector<std::pair<int, int>> symmetry_map;
  std::vector<Body> bodies;
  std::vector<Joint> joints;
  std::map<std::string, PointRef> named_points;
  HalfDef upper, lower;
  std::vector<ThetaDef> theta_defs;
  std::string actuation_point;  // key into named_points
  Vec2 actuation_direction{-1.0, 0.0};
  std::vector<double> reference_pose;  // per body, radians; ground entries 0
  std::vector<std::array<double, 2>> guess_offsets;  // {upper, lower} radians

  int ground_body = -1;
  std::vector<int> moving_bodies;   // declaration order; the angle layout
  std::vector<TreeEdge> tree;       // BFS order from ground, cut joints skipped
  std::vector<int> loop_joints;     // non-tree, non-cut joints plus cut joints

  int link_index(const std::string& id) const;
  int body_index(const std::string& id) const;
  bool in_upper(int body) const;
};

struct LinkLengths {
  std::map<std::string, double> lengths;  // "L1".."L15" -> mm
  double at(const std::string& id) const;
};

// Validates presence of every topology link and non-negativity.
LinkLengths make_lengths(const LinkageTopology& topo,
                         const std::map<std::string, double>& values);
// Fills symmetry partners from the first-named link of each pair.
LinkLengths expand_symmetric(const LinkageTopology& topo,
                             const std::map<std::string, double>& independent);
// First-named link of each symmetry pair plus unpaired links, declaration order.
std::vector<std::string> independent_links(const LinkageTopology& topo);
bool symmetry_ok(const LinkageTopology& topo, const LinkLengths& lengths,
                 double tol = 1e-9);

struct Configuration {
  std::map<std::string, double> joint_angles;  // body_b relative to body_a
  std::map<std::string, double> body_angles;   // absolute; warm-start payload
  std::map<std::string, Vec2> points;          // named points and joint pivots
  double residual = 0.0;                       // ‖D_upper − D_lower‖ in mm
};

struct ContactSpec {
  double omega = 0.0;  // graspable width, mm
  double psi = 0.0;    // grasp-center offset, mm
};

LinkageTopology load_topology(const std::string& json_text);
LinkageTopology load_topology_file(const std::string& path);

// Link ids along each serial chain from ground to the cut joint.
std::pair<std::vector<std::string>, std::vector<std::string>> branch_chains(
    const LinkageTopology& topo);

int grubler_mobility(const LinkageTopology& topo);

Configuration forward_configuration(
    const LinkageTopology& topo, const LinkLengths& lengths, Vec2 d_point,
    const std::optional<Configuration>& guess = std::nullopt);

struct IkResult {
  Configuration config;
  Vec2 m, n;
};

IkResult solve_ik(const LinkageTopology& topo, const LinkLengths& lengths,
                  const ContactSpec& contact,
                  const std::optional<Configuration>& guess = std::nullopt);

double hold_height(Vec2 m, Vec2 n);

// Finger-opening angles (theta_defs applied to body angles), radians.
std::map<std::string, double> rocker_angles(const LinkageTopology& topo,
                                            const Configuration& config);

// One half of the mechanism posed so its fingertip lands on tip_target; the
// cut-joint end stays free. Non-throwing: failures surface as converged=false.
struct HalfPose {
  std::vector<double> angles;  // per half body, order of HalfDef::bodies
  Vec2 tip{};
  Vec2 d{};
  double residual = 0.0;  // final equation-norm of the half solve
  bool converged = false;
  bool sensitivity_ok = false;
  std::array<double, 4> d_dtip{};  // row-major d(d)/d(tip_target)
  double q_sens = 0.0;  // largest |d angle / d tip target|; explodes at a fold
};

HalfPose solve_half(const LinkageTopology& topo, const LinkLengths& lengths,
                    bool upper, Vec2 tip_target,
                    const std::optional<std::vector<double>>& guess_angles =
                        std::nullopt);

// Every distinct converged pose found across the guess offsets, outward
// branches first. Empty when no offset converges. Near a fold two distinct
// poses can satisfy the same tip target; callers pick by cut-gap.
std::vector<HalfPose> solve_half_all(
    const LinkageTopology& topo, const LinkLengths& lengths, bool upper,
    Vec2 tip_target,
    const std::optional<std::vector<double>>& guess_angles = std::nullopt);

// Finger-opening angles reachable from one half's body-angle vector only.
std::map<std::string, double> half_thetas(const LinkageTopology& topo,
                                          bool upper,
                                          const std::vector<double>& angles);

// Internal pose evaluation shared with the statics module.
struct PoseState {
  std::vector<double> angle;  // per body, radians; ground = 0
  std::vector<Vec2> origin;   // per body-frame origin, world
};

PoseState pose_from_angles(const LinkageTopology& topo,
                           const LinkLengths& lengths,
                           const std::vector<double>& moving_angles);
Vec2 world_point(const LinkageTopology& topo, const LinkLengths& lengths,
                 const PoseState& pose, const PointRef& ref);
std::vector<double> body_angle_vector(const LinkageTopology& topo,
                                      const Configuration& config);

}  // namespace goat::linkage
