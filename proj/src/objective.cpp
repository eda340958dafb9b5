#include "goat/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace goat::obj {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Residual reported for quantities that need a converged sample when the
// sample did not converge; large enough to dominate any real violation.
constexpr double kFailResidual = 1e6;

int body_slot(const linkage::LinkageTopology& topo, int body) {
  for (std::size_t i = 0; i < topo.moving_bodies.size(); ++i)
    if (topo.moving_bodies[i] == body) return static_cast<int>(i);
  throw std::logic_error("body is not a moving body");
}

// Inverse of a row-major 2x2 with the same conditioning guard the statics
// module applies to its transmission matrix.
bool invert2(const std::array<double, 4>& s, std::array<double, 4>& out) {
  const double det = s[0] * s[3] - s[1] * s[2];
  const double scale =
      std::max({std::abs(s[0] * s[3]), std::abs(s[1] * s[2]), 1e-300});
  if (std::abs(det) < 1e-9 * scale) return false;
  out = {s[3] / det, -s[1] / det, -s[2] / det, s[0] / det};
  return true;
}

}  // namespace

double derive_gamma_tilde(double alpha, double phi, double gamma) {
  if (!(alpha > 0.0) || !(gamma > phi))
    throw std::invalid_argument("need alpha > 0 and gamma > phi");
  return gamma - 1.0 / (2.0 * alpha * (gamma - phi) * (gamma - phi));
}

WeightParams make_weight_params(double alpha, double phi, double gamma) {
  if (!(phi > 0.0)) throw std::invalid_argument("phi must be positive");
  return {alpha, phi, gamma, derive_gamma_tilde(alpha, phi, gamma)};
}

double weight(double sf, const WeightParams& wp) {
  if (!(sf > wp.phi)) return -kInf;
  const double q = wp.alpha * (sf - wp.gamma_tilde);
  return 1.0 - wp.alpha / (sf - wp.phi) - q * q;
}

std::vector<double> sample_workspace(double omega_lo, double omega_hi, int n) {
  if (!(omega_lo < omega_hi))
    throw std::invalid_argument("width window must have omega_lo < omega_hi");
  if (n < 2) throw std::invalid_argument("need at least two width samples");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = omega_lo + (omega_hi - omega_lo) * i / (n - 1);
  out[n - 1] = omega_hi;
  return out;
}

void validate_task(const TaskConfig& task) {
  if (!(task.psi >= 0.0) || !(task.h_upper > 0.0) || !(task.tip_upper > 0.0) ||
      !(task.stroke > 0.0) || !(task.eps_loop > 0.0))
    throw std::invalid_argument("task scalars must be positive");
  if (!(task.link_lo > 0.0) || !(task.link_lo < task.link_hi))
    throw std::invalid_argument("need 0 < link_lo < link_hi");
  if (!(task.theta_lo < task.theta_hi))
    throw std::invalid_argument("need theta_lo < theta_hi");
  if (task.n_samples < 2)
    throw std::invalid_argument("need at least two workspace samples");
  if (task.cdf_grid_points < 4)
    throw std::invalid_argument("need at least four density samples");
}

Evaluator::Evaluator(const linkage::LinkageTopology& topo,
                     env::BivariateLogNormal model, TaskConfig task,
                     StaticsParams statics, WeightParams wp)
    : topo_(topo),
      model_(model),
      task_(task),
      statics_(statics),
      wp_(wp) {
  validate_task(task_);
  if (!(model_.sigma[0] > 0.0) || !(model_.sigma[1] > 0.0) ||
      !(std::abs(model_.rho) < 1.0))
    throw DegenerateVariance("environment model is degenerate");
  required_ratio_ = statics::required_ratio(statics_);
  if (!(required_ratio_ > 0.0))
    throw DivisionByZero("required transmission ratio is zero");
  for (int b : topo_.upper.bodies)
    ref_half_u_.push_back(topo_.reference_pose[body_slot(topo_, b)]);
  for (int b : topo_.lower.bodies)
    ref_half_l_.push_back(topo_.reference_pose[body_slot(topo_, b)]);
}

void Evaluator::solve_sample(const DecisionVector& d,
                             const std::vector<double>& omegas, int i,
                             const SampleState* seed, SampleState& state,
                             WorkspaceSample& sample) const {
  state = SampleState{};
  sample = WorkspaceSample{};

  const double omega = omegas[i];
  const Vec2 tip_u{d.m_x[i], task_.psi + omega / 2};
  const Vec2 tip_l{d.n_x[i], task_.psi - omega / 2};
  sample.omega = omega;
  sample.m = tip_u;
  sample.n = tip_l;
  sample.h = std::abs(d.m_x[i] - d.n_x[i]);

  if (i + 1 < static_cast<int>(omegas.size()) && sample.h < task_.h_upper) {
    const int per =
        std::max(4, task_.cdf_grid_points / (task_.n_samples - 1));
    sample.cdf_delta = env::cdf_rect_riemann_serial(
        model_, {omega, omegas[i + 1], sample.h, task_.h_upper}, per);
  }

  const bool warm = seed && seed->ok;
  const auto up = linkage::solve_half(topo_, d.lengths, true, tip_u,
                                      warm ? seed->warm_u : ref_half_u_);
  const auto lo = linkage::solve_half(topo_, d.lengths, false, tip_l,
                                      warm ? seed->warm_l : ref_half_l_);
  adopt_halves(up, lo, state, sample);
}

void Evaluator::adopt_halves(const linkage::HalfPose& up,
                             const linkage::HalfPose& lo, SampleState& state,
                             WorkspaceSample& sample) const {
  state.ok = up.converged && lo.converged;
  sample.weight = -kInf;
  if (!state.ok) return;

  state.warm_u = up.angles;
  state.warm_l = lo.angles;
  state.d_u = up.d;
  state.d_l = lo.d;
  state.q_sens = std::max(up.q_sens, lo.q_sens);
  sample.thetas = linkage::half_thetas(topo_, true, up.angles);
  const auto tl = linkage::half_thetas(topo_, false, lo.angles);
  sample.thetas.insert(tl.begin(), tl.end());

  // Virtual-work transmission using dTip/dD = (dD/dTip)^{-1} per half; both
  // halves share the cut point D, so the assembled 2x2 matches the statics
  // module's finite-difference construction.
  std::array<double, 4> iu{}, il{};
  if (up.sensitivity_ok && lo.sensitivity_ok && invert2(up.d_dtip, iu) &&
      invert2(lo.d_dtip, il)) {
    const double a00 = iu[2], a01 = -il[2];
    const double a10 = iu[3], a11 = -il[3];
    const Vec2 f_act = topo_.actuation_direction * statics_.f_actuator;
    const double b0 = -f_act.x, b1 = -f_act.y;
    const double det = a00 * a11 - a01 * a10;
    const double scale =
        std::max({std::abs(a00 * a11), std::abs(a01 * a10), 1e-300});
    if (std::abs(det) >= 1e-9 * scale) {
      const double fm = (b0 * a11 - a01 * b1) / det;
      const double fn = (a00 * b1 - b0 * a10) / det;
      sample.sf = std::abs(fm + fn) / statics_.f_actuator / required_ratio_;
      state.sf_ok = true;
    }
  }
  sample.weight = state.sf_ok ? weight(sample.sf, wp_) : -kInf;
}

void Evaluator::assemble(const DecisionVector& d, Probe& p) const {
  const int n = task_.n_samples;
  p.eval = Evaluation{};
  p.eval.samples = p.samples;
  p.residuals.clear();

  std::string diag;
  for (int i = 0; i < n && diag.empty(); ++i)
    if (!p.states[i].ok)
      diag = "sample " + std::to_string(i) + ": kinematics unreachable";
  for (int i = 0; i + 1 < n && diag.empty(); ++i) {
    if (!p.states[i].sf_ok)
      diag = "sample " + std::to_string(i) + ": singular transmission";
    else if (p.samples[i].weight == -kInf)
      diag = "sample " + std::to_string(i) + ": safety factor " +
             fmt_double(p.samples[i].sf) + " at or below phi";
  }

  double cov = 0.0, weighted = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    cov += p.samples[i].cdf_delta;
    if (diag.empty()) weighted += p.samples[i].weight * p.samples[i].cdf_delta;
  }
  p.eval.coverage = cov;
  if (diag.empty() && !std::isfinite(weighted)) diag = "numerical breakdown";
  if (diag.empty()) {
    p.eval.objective = 1.0 - weighted;
  } else {
    p.eval.objective = kInf;
    p.eval.diagnostic = diag;
  }

  auto& r = p.residuals;
  for (int i = 0; i < n; ++i)
    r.push_back(p.states[i].ok
                    ? (p.states[i].d_u - p.states[i].d_l).norm() - task_.eps_loop
                    : kFailResidual);
  for (int i = 0; i < n; ++i) {
    r.push_back(d.m_x[i] - task_.tip_upper);
    r.push_back(d.n_x[i] - task_.tip_upper);
  }

  bool any_ok = false;
  double stroke = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!p.states[i].ok) continue;
    const Vec2 di = (p.states[i].d_u + p.states[i].d_l) * 0.5;
    for (int j = 0; j < i; ++j) {
      if (!p.states[j].ok) continue;
      const Vec2 dj = (p.states[j].d_u + p.states[j].d_l) * 0.5;
      stroke = std::max(stroke, (di - dj).norm());
    }
    any_ok = true;
  }
  r.push_back(any_ok ? stroke - task_.stroke : kFailResidual);

  const int n_links = static_cast<int>(topo_.link_names.size());
  for (int k = 1; k < n_links; ++k) {
    const double len = d.lengths.at(topo_.link_names[k]);
    r.push_back(task_.link_lo - len);
    r.push_back(len - task_.link_hi);
  }
  const double ground = d.lengths.at(topo_.link_names[0]);
  r.push_back(-ground);
  r.push_back(ground - task_.link_hi);

  for (int i = 0; i < n; ++i)
    for (const auto& def : topo_.theta_defs) {
      if (p.states[i].ok) {
        const double th = p.samples[i].thetas.at(def.name);
        r.push_back(task_.theta_lo - th);
        r.push_back(th - task_.theta_hi);
      } else {
        r.push_back(kFailResidual);
        r.push_back(kFailResidual);
      }
    }

  p.max_violation = 0.0;
  for (double v : r) p.max_violation = std::max(p.max_violation, v);
}

// Cold starts can drop runs of samples onto a folded branch; re-seed them
// from a better neighbour, sweeping both ways until settled, then re-branch
// anything still open by candidate enumeration. Deterministic, serial.
void Evaluator::repair_pass(const DecisionVector& d,
                            const std::vector<double>& omegas, Probe& p) const {
  const int n = task_.n_samples;
  auto gap = [&](int i) {
    return p.states[i].ok ? (p.states[i].d_u - p.states[i].d_l).norm() : kInf;
  };
  auto healthy = [&](int i) { return gap(i) <= task_.eps_loop; };
  auto all_healthy = [&] {
    for (int i = 0; i < n; ++i)
      if (!healthy(i)) return false;
    return true;
  };
  if (all_healthy()) return;
  auto try_seed = [&](int i, int from) {
    if (healthy(i) || !(gap(from) < gap(i))) return false;
    SampleState st;
    WorkspaceSample sm;
    solve_sample(d, omegas, i, &p.states[from], st, sm);
    if ((st.ok ? (st.d_u - st.d_l).norm() : kInf) < gap(i)) {
      p.states[i] = st;
      p.samples[i] = sm;
      return true;
    }
    return false;
  };
  for (int round = 0; round < 4; ++round) {
    bool moved = false;
    for (int i = 1; i < n; ++i) moved = try_seed(i, i - 1) || moved;
    for (int i = n - 2; i >= 0; --i) moved = try_seed(i, i + 1) || moved;
    if (!moved || all_healthy()) break;
  }
  if (all_healthy()) return;
  bool rescued = false;
  for (int i = 0; i < n; ++i)
    if (!healthy(i)) rescued = rescue_sample(d, omegas, i, p) || rescued;
  if (!rescued) return;
  // A re-branched sample is a fresh seed for its neighbours.
  for (int round = 0; round < 4; ++round) {
    bool moved = false;
    for (int i = 1; i < n; ++i) moved = try_seed(i, i - 1) || moved;
    for (int i = n - 2; i >= 0; --i) moved = try_seed(i, i + 1) || moved;
    if (!moved || all_healthy()) break;
  }
}

// Enumerates every converged branch of each half near sample i (seeding from
// the sample itself, its neighbours, and the reference pose) and adopts the
// pair with the smallest cut gap when that beats the current state.
bool Evaluator::rescue_sample(const DecisionVector& d,
                              const std::vector<double>& omegas, int i,
                                Probe& p) const {
  const int n = task_.n_samples;
  const Vec2 tip_u{d.m_x[i], task_.psi + omegas[i] / 2};
  const Vec2 tip_l{d.n_x[i], task_.psi - omegas[i] / 2};

  std::vector<const SampleState*> seeds;
  if (p.states[i].ok) seeds.push_back(&p.states[i]);
  if (i > 0 && p.states[i - 1].ok) seeds.push_back(&p.states[i - 1]);
  if (i + 1 < n && p.states[i + 1].ok) seeds.push_back(&p.states[i + 1]);
  seeds.push_back(nullptr);  // reference pose

  auto same_root = [](const std::vector<double>& a,
                      const std::vector<double>& b) {
    double dist = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
      dist = std::max(dist, std::abs(wrap_angle(a[k] - b[k])));
    return dist < 1e-6;
  };
  auto collect = [&](bool upper, const Vec2& tip) {
    std::vector<linkage::HalfPose> out;
    for (const SampleState* s : seeds) {
      const std::vector<double>& warm =
          s ? (upper ? s->warm_u : s->warm_l) : (upper ? ref_half_u_ : ref_half_l_);
      for (auto& c : linkage::solve_half_all(topo_, d.lengths, upper, tip, warm)) {
        bool dup = false;
        for (const auto& have : out)
          if (same_root(have.angles, c.angles)) {
            dup = true;
            break;
          }
        if (!dup) out.push_back(std::move(c));
      }
    }
    return out;
  };
  const auto cand_u = collect(true, tip_u);
  const auto cand_l = collect(false, tip_l);

  const double current =
      p.states[i].ok ? (p.states[i].d_u - p.states[i].d_l).norm() : kInf;
  const linkage::HalfPose* best_u = nullptr;
  const linkage::HalfPose* best_l = nullptr;
  double best = current;
  for (const auto& u : cand_u)
    for (const auto& l : cand_l) {
      const double g = (u.d - l.d).norm();
      if (g < best) {
        best = g;
        best_u = &u;
        best_l = &l;
      }
    }
  if (!best_u) return false;

  SampleState st;
  WorkspaceSample sm = p.samples[i];  // keeps omega, targets, h, cdf_delta
  sm.sf = 0.0;
  adopt_halves(*best_u, *best_l, st, sm);
  p.states[i] = st;
  p.samples[i] = sm;
  return true;
}

Probe Evaluator::run(const DecisionVector& d, const Probe* prior,
                     bool parallel) const {
  const int n = task_.n_samples;
  if (static_cast<int>(d.m_x.size()) != n ||
      static_cast<int>(d.n_x.size()) != n)
    throw std::invalid_argument("decision contact arrays must have n_samples "
                                "entries");
  Probe p;
  p.states.resize(n);
  p.samples.resize(n);
  if (!(d.omega_lo < d.omega_hi)) {
    assemble(d, p);
    p.eval.objective = kInf;
    p.eval.diagnostic = "DegenerateRange: omega_lo >= omega_hi";
    return p;
  }
  const std::vector<double> omegas =
      sample_workspace(d.omega_lo, d.omega_hi, n);
  const bool use_prior = prior && static_cast<int>(prior->states.size()) == n;
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      solve_sample(d, omegas, i, use_prior ? &prior->states[i] : nullptr,
                   p.states[i], p.samples[i]);
  } else {
    for (int i = 0; i < n; ++i)
      solve_sample(d, omegas, i, use_prior ? &prior->states[i] : nullptr,
                   p.states[i], p.samples[i]);
  }
  if (!use_prior) repair_pass(d, omegas, p);
  assemble(d, p);
  return p;
}

Probe Evaluator::full(const DecisionVector& d, const Probe* prior) const {
  return run(d, prior, true);
}

Probe Evaluator::full_serial(const DecisionVector& d,
                             const Probe* prior) const {
  return run(d, prior, false);
}

Probe Evaluator::resample(const Probe& base, const DecisionVector& d,
                          int i) const {
  const int n = task_.n_samples;
  if (i < 0 || i >= n) throw std::invalid_argument("sample index out of range");
  Probe p = base;
  const std::vector<double> omegas =
      sample_workspace(d.omega_lo, d.omega_hi, n);
  solve_sample(d, omegas, i, &base.states[i], p.states[i], p.samples[i]);
  assemble(d, p);
  return p;
}

Evaluation evaluate(const DecisionVector& d,
                    const linkage::LinkageTopology& topo,
                    const env::BivariateLogNormal& model,
                    const TaskConfig& task, const StaticsParams& statics,
                    const WeightParams& wp) {
  return Evaluator(topo, model, task, statics, wp).full(d).eval;
}

Evaluation evaluate_serial(const DecisionVector& d,
                           const linkage::LinkageTopology& topo,
                           const env::BivariateLogNormal& model,
                           const TaskConfig& task, const StaticsParams& statics,
                           const WeightParams& wp) {
  return Evaluator(topo, model, task, statics, wp).full_serial(d).eval;
}

std::vector<double> constraint_residuals(const DecisionVector& d,
                                         const linkage::LinkageTopology& topo,
                                         const TaskConfig& task) {
  env::BivariateLogNormal unit;
  unit.mu = {0.0, 0.0};
  unit.sigma = {1.0, 1.0};
  unit.rho = 0.0;
  Evaluator ev(topo, unit, task, StaticsParams{}, WeightParams{});
  return ev.full_serial(d).residuals;
}

std::vector<std::string> constraint_labels(const linkage::LinkageTopology& topo,
                                           const TaskConfig& task) {
  std::vector<std::string> out;
  for (int i = 0; i < task.n_samples; ++i)
    out.push_back("loop_closure[" + std::to_string(i) + "]");
  for (int i = 0; i < task.n_samples; ++i) {
    out.push_back("tip_m[" + std::to_string(i) + "]");
    out.push_back("tip_n[" + std::to_string(i) + "]");
  }
  out.push_back("stroke");
  for (std::size_t k = 1; k < topo.link_names.size(); ++k) {
    out.push_back("lo:" + topo.link_names[k]);
    out.push_back("hi:" + topo.link_names[k]);
  }
  out.push_back("lo:" + topo.link_names[0]);
  out.push_back("hi:" + topo.link_names[0]);
  for (int i = 0; i < task.n_samples; ++i)
    for (const auto& def : topo.theta_defs) {
      out.push_back(def.name + "_lo[" + std::to_string(i) + "]");
      out.push_back(def.name + "_hi[" + std::to_string(i) + "]");
    }
  return out;
}

}  // namespace goat::obj
