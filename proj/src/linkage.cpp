#include "goat/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include <Eigen/Dense>

#include "goat/jsonio.hpp"

namespace goat::linkage {
namespace {

constexpr double kNewtonTarget = 5e-13;  // ‖r‖∞ goal, mm
constexpr double kNewtonAccept = 1e-10;  // stall still counts as converged
constexpr int kNewtonMaxIter = 100;
constexpr double kFdAngle = 1e-7;  // rad, Jacobian differencing

std::vector<double> resolve_lengths(const LinkageTopology& topo,
                                    const LinkLengths& lengths) {
  std::vector<double> out(topo.link_names.size());
  for (std::size_t i = 0; i < topo.link_names.size(); ++i)
    out[i] = lengths.at(topo.link_names[i]);
  return out;
}

Vec2 eval_form(const PointForm& form, const std::vector<double>& L,
               double body_angle) {
  Vec2 p{0.0, 0.0};
  for (const auto& t : form) {
    const double a = body_angle + t.angle;
    const double r = t.scale * L[t.link];
    p.x += r * std::cos(a);
    p.y += r * std::sin(a);
  }
  return p;
}

// One scalar equation: world coordinate of a body point equals a value.
struct TargetEq {
  PointRef ref;
  int coord = 0;
  double value = 0.0;
};

// A square Newton problem over a subset of the moving-body angles.
struct EqSpec {
  std::vector<int> unknowns;         // positions into moving_bodies
  std::vector<int> joint_eqs;       // joint indices; coincidence, 2 eqs each
  std::vector<TargetEq> targets;    // 1 eq each
  std::size_t size() const { return 2 * joint_eqs.size() + targets.size(); }
};

struct Workspace {
  const LinkageTopology& topo;
  std::vector<double> L;
  PoseState pose;

  Workspace(const LinkageTopology& t, const LinkLengths& lengths)
      : topo(t), L(resolve_lengths(t, lengths)) {
    pose.angle.assign(t.bodies.size(), 0.0);
    pose.origin.assign(t.bodies.size(), Vec2{0.0, 0.0});
  }

  void set_angles(const std::vector<double>& moving_angles) {
    for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
      pose.angle[topo.moving_bodies[i]] = moving_angles[i];
    propagate();
  }

  void propagate() {
    pose.origin[topo.ground_body] = {0.0, 0.0};
    pose.angle[topo.ground_body] = 0.0;
    for (const auto& e : topo.tree) {
      const Joint& j = topo.joints[e.joint];
      const auto& pa = e.parent_is_a ? j.point_a : j.point_b;
      const auto& pb = e.parent_is_a ? j.point_b : j.point_a;
      const Vec2 pivot =
          pose.origin[e.parent] +
          eval_form(topo.bodies[e.parent].points.at(pa), L, pose.angle[e.parent]);
      pose.origin[e.child] =
          pivot -
          eval_form(topo.bodies[e.child].points.at(pb), L, pose.angle[e.child]);
    }
  }

  Vec2 point(const PointRef& ref) const {
    return pose.origin[ref.body] +
           eval_form(topo.bodies[ref.body].points.at(ref.point), L,
                     pose.angle[ref.body]);
  }

  Vec2 joint_gap(int joint) const {
    const Joint& j = topo.joints[joint];
    const Vec2 a = point({j.body_a, j.point_a});
    const Vec2 b = point({j.body_b, j.point_b});
    return a - b;
  }

  void residual(const EqSpec& spec, double* r) const {
    std::size_t k = 0;
    for (int ji : spec.joint_eqs) {
      const Vec2 g = joint_gap(ji);
      r[k++] = g.x;
      r[k++] = g.y;
    }
    for (const auto& t : spec.targets) {
      const Vec2 p = point(t.ref);
      r[k++] = (t.coord == 0 ? p.x : p.y) - t.value;
    }
  }
};

struct NewtonOutcome {
  bool converged = false;
  bool singular = false;
  double rnorm_inf = 0.0;
};

// Damped Newton on the subset angles inside `angles` (full moving vector).
NewtonOutcome newton_solve(Workspace& ws, const EqSpec& spec,
                           std::vector<double>& angles) {
  const int n = static_cast<int>(spec.unknowns.size());
  if (spec.size() != static_cast<std::size_t>(n))
    throw std::logic_error("newton_solve: non-square equation spec");

  Eigen::VectorXd r(n), r_try(n);
  Eigen::MatrixXd J(n, n);
  std::vector<double> work = angles;

  auto eval = [&](const std::vector<double>& a, Eigen::VectorXd& out) {
    ws.set_angles(a);
    ws.residual(spec, out.data());
  };

  NewtonOutcome res;
  eval(angles, r);
  for (int it = 0; it < kNewtonMaxIter; ++it) {
    res.rnorm_inf = r.lpNorm<Eigen::Infinity>();
    if (res.rnorm_inf < kNewtonTarget) {
      res.converged = true;
      return res;
    }
    for (int c = 0; c < n; ++c) {
      work = angles;
      work[spec.unknowns[c]] += kFdAngle;
      eval(work, r_try);
      J.col(c) = (r_try - r) / kFdAngle;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    if (qr.rank() < n) {
      res.singular = true;
      res.converged = res.rnorm_inf < kNewtonAccept;
      return res;
    }
    const Eigen::VectorXd dx = qr.solve(-r);
    const double r0 = r.norm();
    double lam = 1.0;
    bool stepped = false;
    while (lam > 1.0 / 4096.0) {
      work = angles;
      for (int c = 0; c < n; ++c) work[spec.unknowns[c]] += lam * dx[c];
      eval(work, r_try);
      if (r_try.norm() < r0) {
        angles = work;
        r = r_try;
        stepped = true;
        break;
      }
      lam *= 0.5;
    }
    if (!stepped) break;  // stalled; accept only if already tight
  }
  res.rnorm_inf = r.lpNorm<Eigen::Infinity>();
  res.converged = res.rnorm_inf < kNewtonAccept;
  return res;
}

std::vector<double> offsets_applied(const LinkageTopology& topo,
                                    const std::vector<double>& base,
                                    double up_off, double lo_off) {
  std::vector<double> a = base;
  for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
    a[i] += topo.in_upper(topo.moving_bodies[i]) ? up_off : lo_off;
  return a;
}

double cut_residual(const Workspace& ws) {
  double worst = 0.0;
  for (std::size_t ji = 0; ji < ws.topo.joints.size(); ++ji)
    if (ws.topo.joints[ji].cut) worst = std::max(worst, ws.joint_gap(ji).norm());
  return worst;
}

Configuration build_configuration(Workspace& ws,
                                  const std::vector<double>& angles) {
  const LinkageTopology& topo = ws.topo;
  ws.set_angles(angles);
  Configuration cfg;
  for (const auto& b : topo.bodies) cfg.body_angles[b.name] = 0.0;
  for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
    cfg.body_angles[topo.bodies[topo.moving_bodies[i]].name] = angles[i];
  for (const auto& j : topo.joints) {
    cfg.joint_angles[j.name] =
        wrap_angle(ws.pose.angle[j.body_b] - ws.pose.angle[j.body_a]);
    cfg.points["joint:" + j.name] = ws.point({j.body_a, j.point_a});
  }
  for (const auto& [name, ref] : topo.named_points) cfg.points[name] = ws.point(ref);
  cfg.residual = cut_residual(ws);
  return cfg;
}

std::vector<double> start_angles(const LinkageTopology& topo,
                                 const std::optional<Configuration>& guess) {
  if (!guess) return topo.reference_pose;
  return body_angle_vector(topo, *guess);
}

// JSON loading -------------------------------------------------------------

using nlohmann::json;

const json& need(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw MalformedSpec(ctx + ": missing key '" + key + "'");
  return *it;
}

PointForm parse_form(const json& arr, const LinkageTopology& topo,
                     const std::string& ctx) {
  if (!arr.is_array()) throw MalformedSpec(ctx + ": point form must be an array");
  PointForm form;
  for (const auto& t : arr) {
    PointTerm term;
    const std::string link = need(t, "link", ctx).get<std::string>();
    term.link = topo.link_index(link);
    if (term.link < 0) throw MalformedSpec(ctx + ": unknown link '" + link + "'");
    term.angle = deg2rad(need(t, "angle_deg", ctx).get<double>());
    term.scale = t.value("scale", 1.0);
    form.push_back(term);
  }
  return form;
}

PointRef parse_point_ref(const json& j, const LinkageTopology& topo,
                         const std::string& ctx) {
  PointRef ref;
  const std::string body = need(j, "body", ctx).get<std::string>();
  ref.body = topo.body_index(body);
  if (ref.body < 0) throw MalformedSpec(ctx + ": unknown body '" + body + "'");
  ref.point = need(j, "point", ctx).get<std::string>();
  if (!topo.bodies[ref.body].points.count(ref.point))
    throw MalformedSpec(ctx + ": body '" + body + "' has no point '" +
                        ref.point + "'");
  return ref;
}

void build_tree(LinkageTopology& topo) {
  const std::size_t nb = topo.bodies.size();
  std::vector<bool> visited(nb, false);
  visited[topo.ground_body] = true;
  std::vector<bool> used(topo.joints.size(), false);
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t ji = 0; ji < topo.joints.size(); ++ji) {
      const Joint& j = topo.joints[ji];
      if (used[ji] || j.cut) continue;
      const bool va = visited[j.body_a], vb = visited[j.body_b];
      if (va == vb) continue;  // loop edge or not yet reachable
      TreeEdge e;
      e.joint = static_cast<int>(ji);
      e.parent_is_a = va;
      e.parent = va ? j.body_a : j.body_b;
      e.child = va ? j.body_b : j.body_a;
      visited[e.child] = true;
      used[ji] = true;
      topo.tree.push_back(e);
      grew = true;
    }
  }

  // Tips must be reachable even counting cut joints before we complain about
  // posing, so the error distinguishes a floating fingertip from a bad tree.
  std::vector<bool> conn(nb, false);
  conn[topo.ground_body] = true;
  bool again = true;
  while (again) {
    again = false;
    for (const Joint& j : topo.joints) {
      if (conn[j.body_a] != conn[j.body_b]) {
        conn[j.body_a] = conn[j.body_b] = true;
        again = true;
      }
    }
  }
  for (const std::string& tip : {topo.upper.tip, topo.lower.tip}) {
    const auto& ref = topo.named_points.at(tip);
    if (!conn[ref.body])
      throw DisconnectedFingertip("fingertip '" + tip +
                                  "' is not connected to ground");
  }
  for (std::size_t b = 0; b < nb; ++b)
    if (!visited[b])
      throw MalformedSpec("body '" + topo.bodies[b].name +
                          "' cannot be posed from ground without cut joints");

  for (std::size_t ji = 0; ji < topo.joints.size(); ++ji)
    if (!used[ji]) topo.loop_joints.push_back(static_cast<int>(ji));
}

std::vector<int> tree_path(const LinkageTopology& topo, int body) {
  // Edge indices into topo.tree from ground down to `body`.
  std::vector<int> parent_edge(topo.bodies.size(), -1);
  for (std::size_t i = 0; i < topo.tree.size(); ++i)
    parent_edge[topo.tree[i].child] = static_cast<int>(i);
  std::vector<int> path;
  int b = body;
  while (b != topo.ground_body) {
    const int e = parent_edge[b];
    if (e < 0) throw MalformedSpec("no tree path to body");
    path.push_back(e);
    b = topo.tree[e].parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::string> chain_links(const LinkageTopology& topo, int body,
                                     const std::string& end_point) {
  std::vector<std::string> chain;
  for (int ei : tree_path(topo, body)) {
    const TreeEdge& e = topo.tree[ei];
    const Joint& j = topo.joints[e.joint];
    const auto& pname = e.parent_is_a ? j.point_a : j.point_b;
    const PointForm& form = topo.bodies[e.parent].points.at(pname);
    if (!form.empty()) chain.push_back(topo.link_names[form.back().link]);
  }
  const PointForm& endf = topo.bodies[body].points.at(end_point);
  if (!endf.empty()) chain.push_back(topo.link_names[endf.back().link]);
  return chain;
}

}  // namespace

int LinkageTopology::link_index(const std::string& id) const {
  auto it = std::find(link_names.begin(), link_names.end(), id);
  return it == link_names.end() ? -1
                                : static_cast<int>(it - link_names.begin());
}

int LinkageTopology::body_index(const std::string& id) const {
  for (std::size_t i = 0; i < bodies.size(); ++i)
    if (bodies[i].name == id) return static_cast<int>(i);
  return -1;
}

bool LinkageTopology::in_upper(int body) const {
  return std::find(upper.bodies.begin(), upper.bodies.end(), body) !=
         upper.bodies.end();
}

double LinkLengths::at(const std::string& id) const {
  auto it = lengths.find(id);
  if (it == lengths.end()) throw MalformedSpec("unknown link id '" + id + "'");
  return it->second;
}

LinkLengths make_lengths(const LinkageTopology& topo,
                         const std::map<std::string, double>& values) {
  LinkLengths out;
  for (const auto& id : topo.link_names) {
    auto it = values.find(id);
    if (it == values.end())
      throw MalformedSpec("link lengths missing '" + id + "'");
    if (!(it->second >= 0.0) || !std::isfinite(it->second))
      throw MalformedSpec("link '" + id + "' must be a finite length >= 0");
    out.lengths[id] = it->second;
  }
  return out;
}

std::vector<std::string> independent_links(const LinkageTopology& topo) {
  std::set<std::string> dependent;
  for (const auto& [a, b] : topo.symmetry_map)
    dependent.insert(topo.link_names[b]);
  std::vector<std::string> out;
  for (const auto& id : topo.link_names)
    if (!dependent.count(id)) out.push_back(id);
  return out;
}

LinkLengths expand_symmetric(const LinkageTopology& topo,
                             const std::map<std::string, double>& independent) {
  std::map<std::string, double> values = independent;
  for (const auto& [ia, ib] : topo.symmetry_map) {
    const std::string a = topo.link_names[ia], b = topo.link_names[ib];
    const bool ha = values.count(a), hb = values.count(b);
    if (ha && !hb) values[b] = values[a];
    if (hb && !ha) values[a] = values[b];
  }
  return make_lengths(topo, values);
}

bool symmetry_ok(const LinkageTopology& topo, const LinkLengths& lengths,
                 double tol) {
  for (const auto& [ia, ib] : topo.symmetry_map)
    if (std::abs(lengths.at(topo.link_names[ia]) -
                 lengths.at(topo.link_names[ib])) > tol)
      return false;
  return true;
}

LinkageTopology load_topology(const std::string& json_text) {
  const json j = parse_json_text(json_text, "topology");
  LinkageTopology topo;
  try {
    topo.name = j.value("name", "unnamed");
    for (const auto& l : need(j, "links", "topology"))
      topo.link_names.push_back(l.get<std::string>());
    {
      std::set<std::string> seen(topo.link_names.begin(),
                                 topo.link_names.end());
      if (seen.size() != topo.link_names.size())
        throw MalformedSpec("duplicate link id");
    }
    for (const auto& pair : j.value("symmetry", json::array())) {
      const int a = topo.link_index(pair.at(0).get<std::string>());
      const int b = topo.link_index(pair.at(1).get<std::string>());
      if (a < 0 || b < 0 || a == b)
        throw MalformedSpec("symmetry pair must name two distinct links");
      topo.symmetry_map.emplace_back(a, b);
    }

    for (const auto& bj : need(j, "bodies", "topology")) {
      Body b;
      b.name = need(bj, "name", "body").get<std::string>();
      b.ground = bj.value("ground", false);
      if (topo.body_index(b.name) >= 0)
        throw MalformedSpec("duplicate body '" + b.name + "'");
      for (const auto& l : bj.value("links", json::array())) {
        const int li = topo.link_index(l.get<std::string>());
        if (li < 0) throw MalformedSpec("body '" + b.name + "' lists unknown link");
        b.links.push_back(li);
      }
      for (const auto& [pname, form] : need(bj, "points", "body").items())
        b.points[pname] = parse_form(form, topo, "body '" + b.name + "'");
      topo.bodies.push_back(std::move(b));
    }
    for (std::size_t i = 0; i < topo.bodies.size(); ++i) {
      if (topo.bodies[i].ground) {
        if (topo.ground_body >= 0) throw MalformedSpec("multiple ground bodies");
        topo.ground_body = static_cast<int>(i);
      } else {
        topo.moving_bodies.push_back(static_cast<int>(i));
      }
    }
    if (topo.ground_body < 0) throw MalformedSpec("no ground body");

    const auto& joints = need(j, "joints", "topology");
    if (!joints.is_array() || joints.empty())
      throw MalformedSpec("topology must declare at least one joint");
    for (const auto& jj : joints) {
      Joint jt;
      jt.name = need(jj, "name", "joint").get<std::string>();
      for (const auto& existing : topo.joints)
        if (existing.name == jt.name)
          throw MalformedSpec("duplicate joint '" + jt.name + "'");
      jt.body_a = topo.body_index(need(jj, "body_a", jt.name).get<std::string>());
      jt.body_b = topo.body_index(need(jj, "body_b", jt.name).get<std::string>());
      if (jt.body_a < 0 || jt.body_b < 0 || jt.body_a == jt.body_b)
        throw MalformedSpec("joint '" + jt.name +
                            "' must reference two distinct declared bodies");
      jt.point_a = need(jj, "point_a", jt.name).get<std::string>();
      jt.point_b = need(jj, "point_b", jt.name).get<std::string>();
      if (!topo.bodies[jt.body_a].points.count(jt.point_a) ||
          !topo.bodies[jt.body_b].points.count(jt.point_b))
        throw MalformedSpec("joint '" + jt.name +
                            "' references an undeclared attachment point");
      jt.cut = jj.value("cut", false);
      topo.joints.push_back(std::move(jt));
    }

    for (const auto& [name, ref] : need(j, "named_points", "topology").items())
      topo.named_points[name] = parse_point_ref(ref, topo, "named point " + name);

    const auto& halves = need(j, "halves", "topology");
    auto parse_half = [&](const json& h, const char* which) {
      HalfDef half;
      for (const auto& b : need(h, "bodies", which)) {
        const int bi = topo.body_index(b.get<std::string>());
        if (bi < 0) throw MalformedSpec(std::string(which) + ": unknown body");
        half.bodies.push_back(bi);
      }
      half.tip = need(h, "tip", which).get<std::string>();
      if (!topo.named_points.count(half.tip))
        throw MalformedSpec(std::string(which) + ": tip must be a named point");
      half.d_point = parse_point_ref(need(h, "d_point", which), topo, which);
      return half;
    };
    topo.upper = parse_half(need(halves, "upper", "halves"), "upper half");
    topo.lower = parse_half(need(halves, "lower", "halves"), "lower half");

    for (const auto& td : need(j, "theta_defs", "topology")) {
      ThetaDef def;
      def.name = need(td, "name", "theta_def").get<std::string>();
      def.body = topo.body_index(need(td, "body", def.name).get<std::string>());
      if (def.body < 0) throw MalformedSpec("theta_def references unknown body");
      def.datum = deg2rad(need(td, "datum_deg", def.name).get<double>());
      def.sign = need(td, "sign", def.name).get<double>();
      topo.theta_defs.push_back(std::move(def));
    }

    const auto& act = need(j, "actuation", "topology");
    topo.actuation_point = need(act, "point", "actuation").get<std::string>();
    if (!topo.named_points.count(topo.actuation_point))
      throw MalformedSpec("actuation point must be a named point");
    const auto& dir = need(act, "direction", "actuation");
    topo.actuation_direction = {dir.at(0).get<double>(), dir.at(1).get<double>()};

  } catch (const json::exception& e) {
    throw MalformedSpec(std::string("topology: ") + e.what());
  }

  build_tree(topo);

  const int mobility = grubler_mobility(topo);
  if (mobility != 2)
    throw WrongMobility("expected mobility 2, computed " +
                        std::to_string(mobility));

  try {
    const auto& ref_pose = need(j, "reference_pose_deg", "topology");
    topo.reference_pose.resize(topo.moving_bodies.size());
    for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i) {
      const std::string& bname = topo.bodies[topo.moving_bodies[i]].name;
      topo.reference_pose[i] =
          deg2rad(need(ref_pose, bname.c_str(), "reference_pose_deg").get<double>());
    }

    for (const auto& go : need(j, "guess_offsets_deg", "topology"))
      topo.guess_offsets.push_back(
          {deg2rad(go.at(0).get<double>()), deg2rad(go.at(1).get<double>())});
    if (topo.guess_offsets.empty())
      throw MalformedSpec("guess_offsets_deg must be non-empty");
  } catch (const json::exception& e) {
    throw MalformedSpec(std::string("topology: ") + e.what());
  }

  int cut_count = 0;
  for (const auto& jt : topo.joints) cut_count += jt.cut ? 1 : 0;
  if (cut_count != 1)
    throw MalformedSpec("exactly one cut joint is required, found " +
                        std::to_string(cut_count));
  // The two chains feeding the cut joint must not share a moving body.
  const Joint* cut = nullptr;
  for (const auto& jt : topo.joints)
    if (jt.cut) cut = &jt;
  std::set<int> seen;
  for (int body : {cut->body_a, cut->body_b})
    for (int ei : tree_path(topo, body)) {
      if (seen.count(topo.tree[ei].child))
        throw MalformedSpec("branch chains to the cut joint overlap");
      seen.insert(topo.tree[ei].child);
    }

  return topo;
}

LinkageTopology load_topology_file(const std::string& path) {
  return load_topology(read_text_file(path));
}

std::pair<std::vector<std::string>, std::vector<std::string>> branch_chains(
    const LinkageTopology& topo) {
  const Joint* cut = nullptr;
  for (const auto& jt : topo.joints)
    if (jt.cut) cut = &jt;
  if (!cut) throw MalformedSpec("topology has no cut joint");
  return {chain_links(topo, cut->body_a, cut->point_a),
          chain_links(topo, cut->body_b, cut->point_b)};
}

int grubler_mobility(const LinkageTopology& topo) {
  return 3 * static_cast<int>(topo.moving_bodies.size()) -
         2 * static_cast<int>(topo.joints.size());
}

std::vector<double> body_angle_vector(const LinkageTopology& topo,
                                      const Configuration& config) {
  std::vector<double> out(topo.moving_bodies.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::string& name = topo.bodies[topo.moving_bodies[i]].name;
    auto it = config.body_angles.find(name);
    if (it == config.body_angles.end())
      throw std::invalid_argument("guess configuration lacks body angle for '" +
                                  name + "'");
    out[i] = it->second;
  }
  return out;
}

PoseState pose_from_angles(const LinkageTopology& topo,
                           const LinkLengths& lengths,
                           const std::vector<double>& moving_angles) {
  Workspace ws(topo, lengths);
  ws.set_angles(moving_angles);
  return ws.pose;
}

Vec2 world_point(const LinkageTopology& topo, const LinkLengths& lengths,
                 const PoseState& pose, const PointRef& ref) {
  const std::vector<double> L = resolve_lengths(topo, lengths);
  return pose.origin[ref.body] +
         eval_form(topo.bodies[ref.body].points.at(ref.point), L,
                   pose.angle[ref.body]);
}

namespace {

EqSpec full_spec(const LinkageTopology& topo) {
  EqSpec spec;
  for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
    spec.unknowns.push_back(static_cast<int>(i));
  spec.joint_eqs = topo.loop_joints;
  return spec;
}

std::map<std::string, double> thetas_of(const LinkageTopology& topo,
                                        const std::vector<double>& angles) {
  std::map<std::string, double> out;
  for (const auto& def : topo.theta_defs) {
    double body_angle = 0.0;
    for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
      if (topo.moving_bodies[i] == def.body) body_angle = angles[i];
    out[def.name] = def.sign * wrap_angle(body_angle - def.datum);
  }
  return out;
}

bool fingers_outward(const LinkageTopology& topo,
                     const std::vector<double>& angles) {
  for (const auto& [name, th] : thetas_of(topo, angles))
    if (!(th > 0.0 && th < M_PI / 2)) return false;
  return true;
}

}  // namespace

Configuration forward_configuration(const LinkageTopology& topo,
                                    const LinkLengths& lengths, Vec2 d_point,
                                    const std::optional<Configuration>& guess) {
  Workspace ws(topo, lengths);
  EqSpec spec = full_spec(topo);
  const auto& dref = topo.named_points.at(topo.actuation_point);
  spec.targets.push_back({dref, 0, d_point.x});
  spec.targets.push_back({dref, 1, d_point.y});

  const std::vector<double> base = start_angles(topo, guess);
  bool saw_singular = false;
  for (const auto& off : topo.guess_offsets) {
    std::vector<double> angles = offsets_applied(topo, base, off[0], off[1]);
    const NewtonOutcome out = newton_solve(ws, spec, angles);
    saw_singular = saw_singular || out.singular;
    if (out.converged) return build_configuration(ws, angles);
  }
  if (saw_singular)
    throw SingularJacobian("loop-closure Jacobian is rank-deficient at D=(" +
                           fmt_double(d_point.x) + ", " + fmt_double(d_point.y) +
                           ")");
  throw NoAssembly("no assembly found for D=(" + fmt_double(d_point.x) + ", " +
                   fmt_double(d_point.y) + ")");
}

IkResult solve_ik(const LinkageTopology& topo, const LinkLengths& lengths,
                  const ContactSpec& contact,
                  const std::optional<Configuration>& guess) {
  if (!(contact.omega > 0.0))
    throw std::invalid_argument("contact width must be positive");
  Workspace ws(topo, lengths);
  EqSpec spec = full_spec(topo);
  const auto& mref = topo.named_points.at(topo.upper.tip);
  const auto& nref = topo.named_points.at(topo.lower.tip);
  spec.targets.push_back({mref, 1, contact.omega / 2 + contact.psi});
  spec.targets.push_back({nref, 1, -contact.omega / 2 + contact.psi});

  const std::vector<double> base = start_angles(topo, guess);
  bool converged_any = false;
  for (const auto& off : topo.guess_offsets) {
    std::vector<double> angles = offsets_applied(topo, base, off[0], off[1]);
    const NewtonOutcome out = newton_solve(ws, spec, angles);
    if (!out.converged) continue;
    converged_any = true;
    if (!fingers_outward(topo, angles)) continue;
    IkResult res;
    res.config = build_configuration(ws, angles);
    res.m = res.config.points.at(topo.upper.tip);
    res.n = res.config.points.at(topo.lower.tip);
    return res;
  }
  if (converged_any)
    throw BranchViolation(
        "only inward-folded assemblies reach width " + fmt_double(contact.omega));
  throw Unreachable("no assembly reaches width " + fmt_double(contact.omega) +
                    " at offset " + fmt_double(contact.psi));
}

double hold_height(Vec2 m, Vec2 n) { return std::abs(m.x - n.x); }

std::map<std::string, double> rocker_angles(const LinkageTopology& topo,
                                            const Configuration& config) {
  return thetas_of(topo, body_angle_vector(topo, config));
}

namespace {

// Shared frame of the per-half tip problem: the square equation spec, the
// seed vector, and the deduplicated per-half guess offsets.
struct HalfProblem {
  const HalfDef* half = nullptr;
  PointRef tipref;
  EqSpec spec;
  std::vector<int> body_to_slot;
  std::vector<double> base;
  std::vector<double> offs;
};

HalfProblem make_half_problem(
    const LinkageTopology& topo, bool upper, Vec2 tip_target,
    const std::optional<std::vector<double>>& guess_angles) {
  HalfProblem hp;
  hp.half = upper ? &topo.upper : &topo.lower;
  const HalfDef& half = *hp.half;

  hp.body_to_slot.assign(topo.bodies.size(), -1);
  for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
    hp.body_to_slot[topo.moving_bodies[i]] = static_cast<int>(i);
  for (int b : half.bodies) hp.spec.unknowns.push_back(hp.body_to_slot[b]);
  auto in_half = [&](int b) {
    return b == topo.ground_body ||
           std::find(half.bodies.begin(), half.bodies.end(), b) !=
               half.bodies.end();
  };
  for (int ji : topo.loop_joints) {
    const Joint& j = topo.joints[ji];
    if (!j.cut && in_half(j.body_a) && in_half(j.body_b))
      hp.spec.joint_eqs.push_back(ji);
  }
  hp.tipref = topo.named_points.at(half.tip);
  hp.spec.targets.push_back({hp.tipref, 0, tip_target.x});
  hp.spec.targets.push_back({hp.tipref, 1, tip_target.y});

  hp.base = topo.reference_pose;
  if (guess_angles) {
    if (guess_angles->size() != half.bodies.size())
      throw std::invalid_argument("half guess has wrong length");
    for (std::size_t k = 0; k < half.bodies.size(); ++k)
      hp.base[hp.body_to_slot[half.bodies[k]]] = (*guess_angles)[k];
  }

  // Unique per-half offsets, first-seen order.
  for (const auto& go : topo.guess_offsets) {
    const double v = go[upper ? 0 : 1];
    if (std::find(hp.offs.begin(), hp.offs.end(), v) == hp.offs.end())
      hp.offs.push_back(v);
  }
  return hp;
}

// Fills a solved HalfPose, including the implicit sensitivity of the
// cut-end point to the tip target: the tip rows of the residual are
// tip(q) - target, so J dq = [0; I] dtarget.
void finish_half(Workspace& ws, const HalfProblem& hp,
                 const std::vector<double>& angles, double rnorm,
                 HalfPose& result) {
  ws.set_angles(angles);
  result.converged = true;
  result.residual = rnorm;
  result.angles.clear();
  for (int b : hp.half->bodies)
    result.angles.push_back(angles[hp.body_to_slot[b]]);
  result.tip = ws.point({hp.tipref.body, hp.tipref.point});
  result.d = ws.point(hp.half->d_point);

  const int n = static_cast<int>(hp.spec.unknowns.size());
  Eigen::VectorXd r0(n), r1(n);
  Eigen::MatrixXd J(n, n), dD(2, n);
  ws.residual(hp.spec, r0.data());
  const Vec2 d0 = result.d;
  std::vector<double> work(angles);
  for (int c = 0; c < n; ++c) {
    work = angles;
    work[hp.spec.unknowns[c]] += kFdAngle;
    ws.set_angles(work);
    ws.residual(hp.spec, r1.data());
    J.col(c) = (r1 - r0) / kFdAngle;
    const Vec2 dc = ws.point(hp.half->d_point);
    dD(0, c) = (dc.x - d0.x) / kFdAngle;
    dD(1, c) = (dc.y - d0.y) / kFdAngle;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
  if (qr.rank() == n) {
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
    rhs(n - 2, 0) = 1.0;
    rhs(n - 1, 1) = 1.0;
    const Eigen::MatrixXd dq = qr.solve(rhs);
    const Eigen::MatrixXd s = dD * dq;
    result.d_dtip = {s(0, 0), s(0, 1), s(1, 0), s(1, 1)};
    result.q_sens = dq.cwiseAbs().maxCoeff();
    result.sensitivity_ok = true;
  }
}

// Fingers-outward branch preference, same convention as the full IK gate;
// an inward-folded pose is kept only when no outward one converges.
bool half_outward(const LinkageTopology& topo, const HalfProblem& hp,
                  const std::vector<double>& angles) {
  for (const auto& def : topo.theta_defs)
    if (std::find(hp.half->bodies.begin(), hp.half->bodies.end(), def.body) !=
        hp.half->bodies.end()) {
      const double th =
          def.sign * wrap_angle(angles[hp.body_to_slot[def.body]] - def.datum);
      if (!(th > 0.0 && th < M_PI / 2)) return false;
    }
  return true;
}

}  // namespace

HalfPose solve_half(const LinkageTopology& topo, const LinkLengths& lengths,
                    bool upper, Vec2 tip_target,
                    const std::optional<std::vector<double>>& guess_angles) {
  const HalfProblem hp = make_half_problem(topo, upper, tip_target, guess_angles);
  Workspace ws(topo, lengths);

  HalfPose result;
  std::vector<double> fallback;
  double fallback_rnorm = 0.0;
  for (double off : hp.offs) {
    std::vector<double> angles = hp.base;
    for (int slot : hp.spec.unknowns) angles[slot] += off;
    const NewtonOutcome out = newton_solve(ws, hp.spec, angles);
    if (!out.converged) {
      if (!result.converged && fallback.empty()) result.residual = out.rnorm_inf;
      continue;
    }
    if (half_outward(topo, hp, angles)) {
      finish_half(ws, hp, angles, out.rnorm_inf, result);
      return result;
    }
    if (fallback.empty()) {
      fallback = angles;
      fallback_rnorm = out.rnorm_inf;
    }
  }
  if (!fallback.empty()) finish_half(ws, hp, fallback, fallback_rnorm, result);
  return result;
}

std::vector<HalfPose> solve_half_all(
    const LinkageTopology& topo, const LinkLengths& lengths, bool upper,
    Vec2 tip_target, const std::optional<std::vector<double>>& guess_angles) {
  const HalfProblem hp = make_half_problem(topo, upper, tip_target, guess_angles);
  Workspace ws(topo, lengths);

  std::vector<std::vector<double>> roots;
  std::vector<double> rnorms;
  for (double off : hp.offs) {
    std::vector<double> angles = hp.base;
    for (int slot : hp.spec.unknowns) angles[slot] += off;
    const NewtonOutcome out = newton_solve(ws, hp.spec, angles);
    if (!out.converged) continue;
    bool dup = false;
    for (const auto& seen : roots) {
      double dist = 0.0;
      for (int slot : hp.spec.unknowns)
        dist = std::max(dist, std::abs(wrap_angle(angles[slot] - seen[slot])));
      if (dist < 1e-6) {
        dup = true;
        break;
      }
    }
    if (!dup) {
      roots.push_back(std::move(angles));
      rnorms.push_back(out.rnorm_inf);
    }
  }

  std::vector<HalfPose> out;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t k = 0; k < roots.size(); ++k)
      if (half_outward(topo, hp, roots[k]) == (pass == 0)) {
        HalfPose pose;
        finish_half(ws, hp, roots[k], rnorms[k], pose);
        out.push_back(std::move(pose));
      }
  return out;
}

std::map<std::string, double> half_thetas(const LinkageTopology& topo,
                                          bool upper,
                                          const std::vector<double>& angles) {
  const HalfDef& half = upper ? topo.upper : topo.lower;
  if (angles.size() != half.bodies.size())
    throw std::invalid_argument("half angle vector has wrong length");
  std::map<std::string, double> out;
  for (const auto& def : topo.theta_defs)
    for (std::size_t k = 0; k < half.bodies.size(); ++k)
      if (half.bodies[k] == def.body)
        out[def.name] = def.sign * wrap_angle(angles[k] - def.datum);
  return out;
}

}  // namespace goat::linkage
