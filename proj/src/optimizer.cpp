#include "goat/optimizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "goat/statics.hpp"

namespace goat::opt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFailResidual = 1e6;

double unit01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

double viol_of(const std::vector<double>& g) {
  double v = 0.0;
  for (double gi : g) v = std::max(v, gi);
  return v;
}

// PHR augmented Lagrangian for inequality constraints g <= 0.
double phr_value(double f, const std::vector<double>& g,
                 const std::vector<double>& lambda, double mu) {
  if (!(f < kInf)) return kInf;  // +inf and NaN both reject
  double phi = f;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = lambda[i] + mu * g[i];
    if (t > 0.0)
      phi += (t * t - lambda[i] * lambda[i]) / (2.0 * mu);
    else
      phi -= lambda[i] * lambda[i] / (2.0 * mu);
  }
  return std::isnan(phi) ? kInf : phi;
}

struct Best {
  bool has = false;
  std::vector<double> x;
  double f = kInf;
  double viol = kInf;
  std::vector<double> g;
};

void consider(Best& b, const std::vector<double>& x, const ProbeVal& pv,
              double tol) {
  const double v = viol_of(pv.g);
  const bool feas = v <= tol && std::isfinite(pv.f);
  const bool b_feas = b.has && b.viol <= tol && std::isfinite(b.f);
  bool better;
  if (!b.has)
    better = true;
  else if (feas != b_feas)
    better = feas;
  else if (feas)
    better = pv.f < b.f;
  else
    better = v < b.viol || (v == b.viol && pv.f < b.f);
  if (better) {
    b.has = true;
    b.x = x;
    b.f = pv.f;
    b.viol = v;
    b.g = pv.g;
  }
}

struct ProbeCounter {
  const NlpCallbacks* cb;
  long count = 0;
  ProbeVal probe(const std::vector<double>& x) {
    ++count;
    return cb->probe(x);
  }
  ProbeVal probe_coord(const std::vector<double>& x, int j) {
    ++count;
    return cb->probe_coord ? cb->probe_coord(x, j) : cb->probe(x);
  }
};

Eigen::VectorXd fd_gradient(int n, ProbeCounter& pc,
                            const std::vector<double>& x, double phi0,
                            const std::vector<double>& lambda, double mu,
                            const NlpOptions& o) {
  Eigen::VectorXd grad(n);
  std::vector<double> xt = x;
  for (int j = 0; j < n; ++j) {
    const double h = o.fd_step * std::max(1.0, std::abs(x[j]));
    xt[j] = x[j] + h;
    ProbeVal p = pc.probe_coord(xt, j);
    double phij = phr_value(p.f, p.g, lambda, mu);
    if (std::isfinite(phij)) {
      grad[j] = (phij - phi0) / h;
    } else {
      xt[j] = x[j] - h;
      p = pc.probe_coord(xt, j);
      phij = phr_value(p.f, p.g, lambda, mu);
      grad[j] = std::isfinite(phij) ? (phi0 - phij) / h : 0.0;
    }
    xt[j] = x[j];
  }
  return grad;
}

// Returns true when the inner loop reached stationarity (small gradient or no
// descent step left), false when it stopped on an evaluation cap.
bool inner_bfgs(int n, ProbeCounter& pc, const NlpCallbacks& cb,
                std::vector<double>& x, ProbeVal& pv,
                const std::vector<double>& lambda, double mu,
                const NlpOptions& o, Best& best) {
  double phi0 = phr_value(pv.f, pv.g, lambda, mu);
  if (!std::isfinite(phi0)) return false;
  const long entry = pc.count;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad = fd_gradient(n, pc, x, phi0, lambda, mu, o);

  while (true) {
    if (pc.count - entry >= o.max_inner_evals || pc.count >= o.probe_budget)
      return false;
    if (grad.lpNorm<Eigen::Infinity>() <= o.gtol * (1.0 + std::abs(phi0)))
      return true;

    Eigen::VectorXd dir = -H * grad;
    double gd = grad.dot(dir);
    if (!(gd < 0.0)) {
      H.setIdentity();
      dir = -grad;
      gd = grad.dot(dir);
      if (!(gd < 0.0)) return true;
    }

    double t = 1.0;
    bool stepped = false;
    std::vector<double> xt(n);
    ProbeVal pvt;
    double phit = kInf;
    for (int bt = 0; bt < o.max_backtracks; ++bt) {
      for (int i = 0; i < n; ++i) xt[i] = x[i] + t * dir[i];
      // The Armijo bound must measure the step actually taken, which the
      // projection may have shortened along clamped coordinates.
      double gdt = t * gd;
      if (cb.project) {
        cb.project(xt);
        gdt = 0.0;
        for (int i = 0; i < n; ++i) gdt += grad[i] * (xt[i] - x[i]);
      }
      pvt = pc.probe(xt);
      phit = phr_value(pvt.f, pvt.g, lambda, mu);
      if (o.trace >= 3)
        std::fprintf(stderr, "[nlp]    bt=%d t=%.3e dphi=%.6e need<=%.6e\n", bt,
                     t, phit - phi0, o.armijo * gdt);
      if (gdt < 0.0 && phit <= phi0 + o.armijo * gdt) {
        stepped = true;
        break;
      }
      t *= 0.5;
      if (pc.count >= o.probe_budget) break;
    }
    if (!stepped) {
      if (o.trace >= 2)
        std::fprintf(stderr,
                     "[nlp]  no-step phi=%.12g |g|=%.3e gd=%.3e evals=%ld\n",
                     phi0, grad.lpNorm<Eigen::Infinity>(), gd,
                     pc.count - entry);
      return true;
    }
    if (cb.accept) cb.accept();
    if (o.trace >= 2)
      std::fprintf(stderr, "[nlp]  step t=%.3e dphi=%.6e viol=%.3e\n", t,
                   phit - phi0, viol_of(pvt.g));

    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = xt[i] - x[i];
    x = xt;
    pv = pvt;
    phi0 = phit;
    consider(best, x, pv, o.feas_tol);

    const Eigen::VectorXd grad_new =
        fd_gradient(n, pc, x, phi0, lambda, mu, o);
    const Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd T =
          Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      H = T * H * T.transpose() + rho * s * s.transpose();
    }
    grad = grad_new;
  }
}

}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIter: return "max-iter";
    case SolveStatus::kInfeasible: return "infeasible";
  }
  return "unknown";
}

NlpResult solve_nlp(int n, int m, const NlpCallbacks& cb,
                    const std::vector<double>& x0, const NlpOptions& opts) {
  if (static_cast<int>(x0.size()) != n)
    throw std::invalid_argument("x0 size does not match problem dimension");
  if (!cb.probe) throw std::invalid_argument("probe callback not set");

  ProbeCounter pc{&cb};
  std::vector<double> x = x0;
  if (cb.project) cb.project(x);
  ProbeVal pv = pc.probe(x);
  if (static_cast<int>(pv.g.size()) != m)
    throw std::invalid_argument("constraint vector size mismatch");
  for (double gi : pv.g)
    if (std::isnan(gi))
      throw NumericalBreakdown("NaN constraint residual at the start point");
  if (cb.accept) cb.accept();

  Best best;
  consider(best, x, pv, opts.feas_tol);

  NlpResult res;
  if (!std::isfinite(pv.f)) {
    // Nothing to differentiate; the caller owns restoration strategies.
    res.x = x;
    res.f = pv.f;
    res.g = pv.g;
    res.max_violation = viol_of(pv.g);
    res.probes = pc.count;
    res.status = SolveStatus::kInfeasible;
    return res;
  }

  std::vector<double> lambda(m, 0.0);
  double mu = opts.mu0;
  double viol_prev = kInf;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    res.outer_iterations = outer + 1;
    const bool stationary =
        inner_bfgs(n, pc, cb, x, pv, lambda, mu, opts, best);
    // Ground the convergence test and the multiplier update in a
    // from-scratch evaluation of the iterate; warm-start drift would
    // otherwise let the inner loop certify values a cold re-evaluation of
    // the same point cannot reproduce.
    if (cb.resync) {
      cb.resync();
      pv = pc.probe(x);
      if (cb.accept) cb.accept();
      consider(best, x, pv, opts.feas_tol);
      if (!std::isfinite(pv.f)) break;
    }
    const double viol = viol_of(pv.g);
    if (opts.trace >= 1)
      std::fprintf(stderr,
                   "[nlp] outer=%d probes=%ld f=%.12g viol=%.3e mu=%g "
                   "stationary=%d\n",
                   outer, pc.count, pv.f, viol, mu, stationary);
    if (stationary && viol <= opts.feas_tol) break;
    for (int i = 0; i < m; ++i)
      lambda[i] = std::max(0.0, lambda[i] + mu * pv.g[i]);
    if (viol > 0.25 * viol_prev && viol > opts.feas_tol)
      mu = std::min(mu * 10.0, opts.mu_max);
    viol_prev = viol;
    if (pc.count >= opts.probe_budget) break;
  }

  res.x = best.x;
  res.f = best.f;
  res.g = best.g;
  res.max_violation = best.viol;
  res.probes = pc.count;
  if (best.viol <= opts.feas_tol && std::isfinite(best.f))
    res.status = SolveStatus::kConverged;
  else
    res.status = std::isfinite(best.f) ? SolveStatus::kMaxIter
                                       : SolveStatus::kInfeasible;
  return res;
}

ProbeVal benchmark_quadratic(const std::vector<double>& x) {
  if (x.size() != 2)
    throw std::invalid_argument("benchmark takes two variables");
  ProbeVal v;
  v.f = (x[0] - 2.0) * (x[0] - 2.0) + (x[1] - 1.0) * (x[1] - 1.0);
  v.g = {x[0] * x[0] - x[1], x[0] + x[1] - 2.0};
  return v;
}

// ---------------------------------------------------------------------------

std::vector<double> pack_decision(const linkage::LinkageTopology& topo,
                                  const obj::DecisionVector& d) {
  std::vector<double> x;
  for (const auto& name : linkage::independent_links(topo))
    x.push_back(d.lengths.at(name));
  x.insert(x.end(), d.m_x.begin(), d.m_x.end());
  x.insert(x.end(), d.n_x.begin(), d.n_x.end());
  x.push_back(d.omega_lo);
  x.push_back(d.omega_hi);
  return x;
}

obj::DecisionVector unpack_decision(const linkage::LinkageTopology& topo,
                                    int n_samples,
                                    const std::vector<double>& x) {
  const auto names = linkage::independent_links(topo);
  const std::size_t want = names.size() + 2 * n_samples + 2;
  if (x.size() != want)
    throw std::invalid_argument("decision vector has wrong dimension");
  std::map<std::string, double> ind;
  for (std::size_t k = 0; k < names.size(); ++k) ind[names[k]] = x[k];
  obj::DecisionVector d;
  d.lengths = linkage::expand_symmetric(topo, ind);
  const auto* p = x.data() + names.size();
  d.m_x.assign(p, p + n_samples);
  d.n_x.assign(p + n_samples, p + 2 * n_samples);
  d.omega_lo = x[want - 2];
  d.omega_hi = x[want - 1];
  return d;
}

namespace {

// Warm-start bookkeeping around the Evaluator: the last accepted probe seeds
// every subsequent solve, and contact coordinates re-solve one sample only.
class GripperAdapter {
 public:
  GripperAdapter(const obj::Evaluator& ev, const obj::WeightParams& wp)
      : ev_(ev),
        n_(ev.n_samples()),
        names_(linkage::independent_links(ev.topology())),
        m_(static_cast<int>(
            obj::constraint_labels(ev.topology(), ev.task()).size())),
        restore_margin_(wp.phi * 1.05) {}

  int dim() const { return static_cast<int>(names_.size()) + 2 * n_ + 2; }
  int n_constraints() const { return m_; }
  void set_restore(bool on) { restore_ = on; }

  ProbeVal probe(const std::vector<double>& x) {
    obj::DecisionVector d;
    if (!try_unpack(x, d)) return fail_val();
    trial_ = have_ ? ev_.full_serial(d, &current_) : ev_.full_serial(d);
    trial_ok_ = true;
    return make_val(trial_);
  }

  ProbeVal probe_coord(const std::vector<double>& x, int j) {
    obj::DecisionVector d;
    if (!try_unpack(x, d)) return fail_val();
    const int si = coord_sample(j);
    if (si >= 0 && have_) return make_val(ev_.resample(current_, d, si));
    return make_val(have_ ? ev_.full_serial(d, &current_)
                          : ev_.full_serial(d));
  }

  void accept() {
    if (trial_ok_) {
      current_ = trial_;
      have_ = true;
    }
  }

  void drop_warm() {
    have_ = false;
    trial_ok_ = false;
  }

  // Lengths may rest on zero but never cross it, and the window keeps a
  // positive span so the width grid stays well defined.
  void project(std::vector<double>& x) const {
    const int nl = static_cast<int>(names_.size());
    for (int k = 0; k < nl; ++k) x[k] = std::max(x[k], 0.0);
    double& lo = x[nl + 2 * n_];
    double& hi = x[nl + 2 * n_ + 1];
    constexpr double kMinSpan = 1e-3;
    if (!(hi - lo >= kMinSpan)) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - 0.5 * kMinSpan;
      hi = mid + 0.5 * kMinSpan;
    }
  }

 private:
  bool try_unpack(const std::vector<double>& x, obj::DecisionVector& d) const {
    try {
      d = unpack_decision(ev_.topology(), n_, x);
      return true;
    } catch (const std::exception&) {
      return false;  // negative trial lengths and the like
    }
  }

  int coord_sample(int j) const {
    const int base = static_cast<int>(names_.size());
    if (j >= base && j < base + n_) return j - base;
    if (j >= base + n_ && j < base + 2 * n_) return j - base - n_;
    return -1;
  }

  ProbeVal make_val(const obj::Probe& p) const {
    ProbeVal v;
    v.g = p.residuals;
    if (!restore_) {
      v.f = p.eval.objective;
      return v;
    }
    double s = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (!p.states[i].ok) {
        s += 25.0;
        continue;
      }
      const double dip = restore_margin_ - p.samples[i].sf;
      if (dip > 0.0) s += dip * dip;
    }
    v.f = s;
    return v;
  }

  ProbeVal fail_val() const {
    ProbeVal v;
    v.f = kInf;
    v.g.assign(m_, kFailResidual);
    return v;
  }

  const obj::Evaluator& ev_;
  int n_;
  std::vector<std::string> names_;
  int m_;
  double restore_margin_;
  bool restore_ = false;
  obj::Probe current_, trial_;
  bool have_ = false;
  bool trial_ok_ = false;
};

// Reported numbers always come from a canonical cold evaluation so that
// evaluate() on the returned decision reproduces them exactly.
void canonicalize(const obj::Evaluator& ev, Solution& s) {
  const obj::Probe p = ev.full_serial(s.decision);
  s.objective = p.eval.objective;
  s.coverage = p.eval.coverage;
  s.max_violation = p.max_violation;
  if (!p.eval.diagnostic.empty()) s.note = p.eval.diagnostic;
}

// Snaps contacts onto exact IK closures at the solved lengths and window;
// kept only when it scores at least as well.
void try_polish(const obj::Evaluator& ev, const ProblemSpec& p, Solution& s) {
  obj::DecisionVector d = s.decision;
  try {
    const auto omegas =
        obj::sample_workspace(d.omega_lo, d.omega_hi, p.task.n_samples);
    for (int i = 0; i < p.task.n_samples; ++i) {
      const auto ik =
          linkage::solve_ik(*p.topo, d.lengths, {omegas[i], p.task.psi});
      d.m_x[i] = ik.m.x;
      d.n_x[i] = ik.n.x;
    }
  } catch (const std::exception&) {
    return;
  }
  const obj::Probe pr = ev.full_serial(d);
  const bool old_feas =
      s.max_violation <= p.options.feas_tol && std::isfinite(s.objective);
  const bool new_feas = pr.max_violation <= p.options.feas_tol &&
                        std::isfinite(pr.eval.objective);
  if (!new_feas) return;
  if (old_feas && pr.eval.objective > s.objective) return;
  s.decision = d;
  s.objective = pr.eval.objective;
  s.coverage = pr.eval.coverage;
  s.max_violation = pr.max_violation;
  if (s.note.empty()) s.note = "polished";
}

Solution solve_with(const obj::Evaluator& ev, const ProblemSpec& p,
                    const obj::DecisionVector& x0, std::uint64_t seed,
                    int start_id) {
  GripperAdapter ad(ev, p.weights);
  NlpCallbacks cb;
  cb.probe = [&ad](const std::vector<double>& x) { return ad.probe(x); };
  cb.probe_coord = [&ad](const std::vector<double>& x, int j) {
    return ad.probe_coord(x, j);
  };
  cb.accept = [&ad] { ad.accept(); };
  cb.resync = [&ad] { ad.drop_warm(); };
  cb.project = [&ad](std::vector<double>& x) { ad.project(x); };

  const std::vector<double> packed = pack_decision(ev.topology(), x0);
  NlpResult nr = solve_nlp(ad.dim(), ad.n_constraints(), cb, packed,
                           p.options);
  if (nr.status == SolveStatus::kInfeasible && !std::isfinite(nr.f)) {
    // Scoreless start (transmission at or below the weighting floor, or a
    // broken sample): pull the margin up with the same machinery, then retry
    // the real objective from wherever that lands.
    ad.set_restore(true);
    NlpOptions ro = p.options;
    ro.probe_budget = std::max<long>(500, p.options.probe_budget / 4);
    ro.max_outer = std::min(p.options.max_outer, 12);
    const NlpResult rr = solve_nlp(ad.dim(), ad.n_constraints(), cb,
                                   packed, ro);
    ad.set_restore(false);
    nr = solve_nlp(ad.dim(), ad.n_constraints(), cb, rr.x, p.options);
  }

  Solution s;
  s.start_id = start_id;
  s.seed = seed;
  s.iterations = nr.outer_iterations;
  s.decision = unpack_decision(ev.topology(), p.task.n_samples, nr.x);
  canonicalize(ev, s);

  // A solve never returns worse than its own start: both are compared under
  // the canonical cold evaluation, feasibility first.
  Solution s0 = s;
  s0.decision = x0;
  s0.note.clear();
  canonicalize(ev, s0);
  const auto feasible = [&](const Solution& q) {
    return q.max_violation <= p.options.feas_tol && std::isfinite(q.objective);
  };
  bool keep_start;
  if (feasible(s0) != feasible(s))
    keep_start = feasible(s0);
  else if (feasible(s0))
    keep_start = s0.objective < s.objective;
  else
    keep_start = s0.max_violation < s.max_violation;
  if (keep_start) {
    s = s0;
    if (s.note.empty()) s.note = "kept start";
  }

  if (std::isfinite(s.objective) && s.max_violation <= 1.0)
    try_polish(ev, p, s);
  if (s.max_violation <= p.options.feas_tol && std::isfinite(s.objective))
    s.status = SolveStatus::kConverged;
  else
    s.status = std::isfinite(s.objective) ? SolveStatus::kMaxIter
                                          : SolveStatus::kInfeasible;
  return s;
}

void check_problem(const ProblemSpec& p) {
  if (!p.topo) throw std::invalid_argument("problem topology not set");
  if (p.task.link_lo > p.task.link_hi)
    throw InfeasibleProblem("link bounds cross: link_lo > link_hi");
}

}  // namespace

Solution solve(const ProblemSpec& problem, const obj::DecisionVector& x0,
               std::uint64_t seed) {
  check_problem(problem);
  obj::Evaluator ev(*problem.topo, problem.model, problem.task,
                    problem.statics, problem.weights);
  return solve_with(ev, problem, x0, seed, 0);
}

namespace {

// IK sweep over [lo, hi]. Cold solves can land inside a fold pocket, so the
// anchor tries several positions; from the first that solves, every other
// sample is warm-chained neighbour to neighbour to stay on one branch.
obj::DecisionVector sweep_contacts(const ProblemSpec& problem,
                                   const linkage::LinkLengths& lengths,
                                   double lo, double hi) {
  const auto& topo = *problem.topo;
  const int n = problem.task.n_samples;
  const auto omegas = obj::sample_workspace(lo, hi, n);

  std::vector<linkage::IkResult> iks(n);
  int anchor = -1;
  for (int cand : {n / 2, n / 4, (3 * n) / 4, 0, n - 1}) {
    try {
      iks[cand] =
          linkage::solve_ik(topo, lengths, {omegas[cand], problem.task.psi});
      anchor = cand;
      break;
    } catch (const GoatError&) {
      if (cand == n - 1) throw;
    }
  }
  for (int i = anchor + 1; i < n; ++i)
    iks[i] = linkage::solve_ik(topo, lengths, {omegas[i], problem.task.psi},
                               iks[i - 1].config);
  for (int i = anchor - 1; i >= 0; --i)
    iks[i] = linkage::solve_ik(topo, lengths, {omegas[i], problem.task.psi},
                               iks[i + 1].config);

  obj::DecisionVector d;
  d.lengths = lengths;
  d.omega_lo = lo;
  d.omega_hi = hi;
  for (int i = 0; i < n; ++i) {
    d.m_x.push_back(iks[i].m.x);
    d.n_x.push_back(iks[i].n.x);
  }
  return d;
}

}  // namespace

obj::DecisionVector presolve_base(const ProblemSpec& problem,
                                  const linkage::LinkLengths& base) {
  check_problem(problem);
  const auto& topo = *problem.topo;
  const int n = problem.task.n_samples;

  struct Pt {
    double om;
    bool ok, good;
  };
  std::vector<Pt> pts;
  for (double om = 2.0; om <= 198.0; om += 1.0) {
    Pt q{om, false, false};
    try {
      const auto ik = linkage::solve_ik(topo, base, {om, problem.task.psi});
      const auto fs =
          statics::analyze(topo, base, ik.config, problem.statics);
      q.ok = true;
      q.good = std::isfinite(fs.sf) && fs.sf > problem.weights.phi;
    } catch (const GoatError&) {
    } catch (const std::invalid_argument&) {
    }
    pts.push_back(q);
  }

  const auto longest = [&pts](bool Pt::*flag) {
    std::pair<double, double> run{1.0, 0.0};
    int best_len = 0;
    const int N = static_cast<int>(pts.size());
    for (int i = 0; i < N;) {
      if (!(pts[i].*flag)) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < N && pts[j + 1].*flag) ++j;
      if (j - i + 1 > best_len) {
        best_len = j - i + 1;
        run = {pts[i].om, pts[j].om};
      }
      i = j + 1;
    }
    return run;
  };

  auto [lo, hi] = longest(&Pt::good);
  if (!(lo < hi)) std::tie(lo, hi) = longest(&Pt::ok);
  if (!(lo < hi))
    throw NoAssembly("base design has no usable width window");

  // The integer scan can straddle a fold where the per-sample solves split
  // across branches; verify the swept start cold and shrink the window to the
  // longest branch-consistent stretch until it evaluates clean.
  const obj::Evaluator ev(topo, problem.model, problem.task, problem.statics,
                          problem.weights);
  for (int round = 0;; ++round) {
    const obj::DecisionVector d = sweep_contacts(problem, base, lo, hi);
    const obj::Probe probe = ev.full_serial(d);
    const auto healthy = [&](int i) {
      return probe.states[i].ok &&
             (probe.states[i].d_u - probe.states[i].d_l).norm() <=
                 problem.task.eps_loop;
    };
    int best_len = 0, best_first = 0;
    for (int i = 0; i < n;) {
      if (!healthy(i)) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < n && healthy(j + 1)) ++j;
      if (j - i + 1 > best_len) {
        best_len = j - i + 1;
        best_first = i;
      }
      i = j + 1;
    }
    if (best_len == n) return d;
    if (best_len < 2 || round == 3)
      throw NoAssembly("base design has no branch-stable width window");
    const auto omegas = obj::sample_workspace(lo, hi, n);
    lo = omegas[best_first];
    hi = omegas[best_first + best_len - 1];
  }
}

linkage::LinkLengths scaled_lengths(const linkage::LinkageTopology& topo,
                                    const linkage::LinkLengths& base,
                                    double k) {
  if (!(k > 0.0)) throw std::invalid_argument("scale must be positive");
  std::map<std::string, double> ind;
  for (const auto& name : linkage::independent_links(topo))
    ind[name] = base.at(name) * k;
  return linkage::expand_symmetric(topo, ind);
}

obj::DecisionVector jitter_start(const ProblemSpec& problem,
                                 const obj::DecisionVector& d, double amp,
                                 std::uint64_t seed) {
  check_problem(problem);
  if (!(amp >= 0.0))
    throw std::invalid_argument("jitter amplitude must be non-negative");
  if (amp == 0.0) return d;
  const auto& topo = *problem.topo;
  std::mt19937_64 rng(seed);
  const obj::Evaluator ev(topo, problem.model, problem.task, problem.statics,
                          problem.weights);
  // A swept start can still cold-evaluate onto mismatched branches; only a
  // start whose every sample closes the loop cleanly is worth returning.
  const auto clean = [&](const obj::DecisionVector& cand) {
    const obj::Probe probe = ev.full_serial(cand);
    for (const auto& st : probe.states)
      if (!st.ok || (st.d_u - st.d_l).norm() > problem.task.eps_loop)
        return false;
    return true;
  };

  // Contacts jittered directly leave the reachable manifold, so jitter the
  // shape and window and re-derive the contacts by an IK sweep. The window
  // only shrinks inward, and because the geometry jitter shifts the
  // assemblable band, a coarse IK grid across the window picks the longest
  // stretch that still solves before the sweep runs.
  for (int attempt = 0; attempt < 3; ++attempt) {
    const double a = amp / (1 << attempt);
    std::map<std::string, double> ind;
    for (const auto& name : linkage::independent_links(topo))
      ind[name] = d.lengths.at(name) * (1.0 + a * (2.0 * unit01(rng) - 1.0));
    const double span = d.omega_hi - d.omega_lo;
    const double lo = d.omega_lo + a * unit01(rng) * span;
    const double hi = d.omega_hi - a * unit01(rng) * span;
    if (!(lo < hi)) continue;
    const auto lengths = linkage::expand_symmetric(topo, ind);

    constexpr int kGrid = 16;
    std::array<double, kGrid> om{};
    std::array<bool, kGrid> ok{};
    for (int g = 0; g < kGrid; ++g) {
      om[g] = lo + (hi - lo) * g / (kGrid - 1);
      try {
        (void)linkage::solve_ik(topo, lengths, {om[g], problem.task.psi});
        ok[g] = true;
      } catch (const GoatError&) {
      }
    }
    int best_len = 0, best_first = 0;
    for (int g = 0; g < kGrid;) {
      if (!ok[g]) {
        ++g;
        continue;
      }
      int j = g;
      while (j + 1 < kGrid && ok[j + 1]) ++j;
      if (j - g + 1 > best_len) {
        best_len = j - g + 1;
        best_first = g;
      }
      g = j + 1;
    }
    if (best_len < 2) continue;
    try {
      obj::DecisionVector cand = sweep_contacts(
          problem, lengths, om[best_first], om[best_first + best_len - 1]);
      if (clean(cand)) return cand;
    } catch (const GoatError&) {
    }
  }
  return d;
}

std::vector<linkage::LinkLengths> default_base_designs(
    const linkage::LinkageTopology& topo) {
  return {
      linkage::expand_symmetric(topo, {{"L1", 0.0},
                                       {"L2", 37.52},
                                       {"L3", 24.52},
                                       {"L4", 50.07},
                                       {"L8", 43.26},
                                       {"L9", 24.26},
                                       {"L10", 10.0},
                                       {"L14", 17.2}}),
      linkage::expand_symmetric(topo, {{"L1", 0.0},
                                       {"L2", 37.5},
                                       {"L3", 25.5},
                                       {"L4", 50.0},
                                       {"L8", 43.5},
                                       {"L9", 48.2},
                                       {"L10", 10.0},
                                       {"L14", 12.3}}),
      linkage::expand_symmetric(topo, {{"L1", 0.0},
                                       {"L2", 40.45},
                                       {"L3", 24.52},
                                       {"L4", 50.07},
                                       {"L8", 43.26},
                                       {"L9", 48.52},
                                       {"L10", 10.0},
                                       {"L14", 14.23}}),
  };
}

namespace {

MultiStartResult run_multi(const ProblemSpec& problem,
                           const std::vector<linkage::LinkLengths>& bases,
                           const std::vector<double>& scales,
                           const std::vector<std::uint64_t>& seeds,
                           bool parallel) {
  check_problem(problem);
  if (bases.empty() || scales.empty() || seeds.empty())
    throw std::invalid_argument(
        "multi_start needs at least one base, scale and seed");

  obj::Evaluator ev(*problem.topo, problem.model, problem.task,
                    problem.statics, problem.weights);

  // The tip offset psi is a task constant, so feasible width windows do not
  // scale with the lengths: a scaled copy is a different mechanism and gets
  // its own pre-solve. A pair without a usable window fails only its starts.
  const int nb = static_cast<int>(bases.size());
  const int ns = static_cast<int>(scales.size());
  const int nk = static_cast<int>(seeds.size());
  std::vector<obj::DecisionVector> pres(nb * ns);
  std::vector<std::string> pres_err(nb * ns);
  for (int bi = 0; bi < nb; ++bi)
    for (int si = 0; si < ns; ++si) {
      try {
        pres[bi * ns + si] = presolve_base(
            problem, scaled_lengths(*problem.topo, bases[bi], scales[si]));
      } catch (const std::exception& e) {
        pres_err[bi * ns + si] = e.what();
      }
    }

  const int total = nb * ns * nk;
  std::vector<Solution> all(total);

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int id = 0; id < total; ++id) {
    const int bi = id / (ns * nk);
    const int si = (id / nk) % ns;
    const int ki = id % nk;
    all[id] = Solution{};
    all[id].start_id = id;
    all[id].seed = seeds[ki];
    all[id].objective = kInf;
    all[id].max_violation = kInf;
    if (!pres_err[bi * ns + si].empty()) {
      all[id].note = pres_err[bi * ns + si];
      continue;
    }
    try {
      const obj::DecisionVector d0 =
          jitter_start(problem, pres[bi * ns + si], problem.start_jitter,
                       mix_seed(seeds[ki], static_cast<std::uint64_t>(id)));
      all[id] = solve_with(ev, problem, d0, seeds[ki], id);
    } catch (const std::exception& e) {
      all[id].note = e.what();
    }
  }

  MultiStartResult out;
  out.all = std::move(all);
  const Solution* best = nullptr;
  for (const Solution& s : out.all) {
    if (s.status != SolveStatus::kConverged) continue;
    if (!best || s.objective < best->objective) best = &s;
  }
  if (!best) throw AllStartsFailed("no start reached a feasible solution");
  out.best = *best;
  return out;
}

}  // namespace

MultiStartResult multi_start(const ProblemSpec& problem,
                             const std::vector<linkage::LinkLengths>& bases,
                             const std::vector<double>& scales,
                             const std::vector<std::uint64_t>& seeds) {
  return run_multi(problem, bases, scales, seeds, true);
}

MultiStartResult multi_start_serial(
    const ProblemSpec& problem, const std::vector<linkage::LinkLengths>& bases,
    const std::vector<double>& scales,
    const std::vector<std::uint64_t>& seeds) {
  return run_multi(problem, bases, scales, seeds, false);
}

}  // namespace goat::opt
