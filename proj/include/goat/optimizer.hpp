#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "goat/objective.hpp"

namespace goat::opt {

// ---------------------------------------------------------------------------
// Generic smooth NLP core: minimize f(x) subject to g(x) <= 0 componentwise.
// Augmented-Lagrangian outer loop (Powell-Hestenes-Rockafellar multipliers),
// dense BFGS inner minimization, forward-difference gradients. f may return
// +inf anywhere; such points are simply never accepted.

struct ProbeVal {
  double f = 0.0;
  std::vector<double> g;
};

struct NlpCallbacks {
  // Trial evaluation. The most recent probe() point is the one promoted by
  // accept(), so implementations may stage warm-start state per call.
  std::function<ProbeVal(const std::vector<double>&)> probe;
  // Evaluation one forward-difference step off the last accepted point in
  // coordinate j; adapters exploit sparsity here. Falls back to probe.
  std::function<ProbeVal(const std::vector<double>&, int)> probe_coord;
  // Promotes the most recent probe() point to the warm-start state.
  std::function<void()> accept;
  // Invalidates warm-start state. Called once per outer iteration before the
  // current iterate is re-probed, so multiplier updates and the convergence
  // test run on from-scratch values.
  std::function<void()> resync;
  // Optional in-place clamp of a trial point onto the evaluable box, applied
  // before every probe of a line-search point. Lets the search slide along a
  // box face (for instance a link length resting at zero) instead of failing
  // every trial that crosses it.
  std::function<void(std::vector<double>&)> project;
};

struct NlpOptions {
  double feas_tol = 1e-6;
  int max_outer = 50;
  int max_inner_evals = 500;  // probe calls per outer iteration
  long probe_budget = 6000;   // probe calls per solve, all phases
  double mu0 = 10.0;
  double mu_max = 1e8;
  double fd_step = 1e-6;  // relative forward-difference step
  double gtol = 1e-8;
  double armijo = 1e-4;
  int max_backtracks = 30;
  int trace = 0;  // 0 silent, 1 outer summaries, 2 inner steps (stderr)
};

enum class SolveStatus { kConverged, kMaxIter, kInfeasible };
std::string to_string(SolveStatus s);

struct NlpResult {
  std::vector<double> x;
  double f = 0.0;
  std::vector<double> g;
  double max_violation = 0.0;
  int outer_iterations = 0;
  long probes = 0;
  SolveStatus status = SolveStatus::kInfeasible;
};

NlpResult solve_nlp(int n, int m, const NlpCallbacks& cb,
                    const std::vector<double>& x0, const NlpOptions& opts);

// Bundled solver benchmark: minimize (x1-2)^2 + (x2-1)^2 subject to
// x1^2 - x2 <= 0 and x1 + x2 <= 2; optimum (1, 1) with value 1.
ProbeVal benchmark_quadratic(const std::vector<double>& x);

// ---------------------------------------------------------------------------
// Gripper sizing problem. Free-variable layout: the independent link lengths
// (independent_links order), m_x[0..n), n_x[0..n), omega_lo, omega_hi.

struct ProblemSpec {
  const linkage::LinkageTopology* topo = nullptr;
  env::BivariateLogNormal model;
  obj::TaskConfig task;
  obj::StaticsParams statics;
  obj::WeightParams weights;
  NlpOptions options;
  double start_jitter = 0.05;  // multiplicative start perturbation amplitude
};

struct Solution {
  obj::DecisionVector decision;
  double objective = 0.0;
  double coverage = 0.0;
  double max_violation = 0.0;
  int start_id = 0;
  std::uint64_t seed = 0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kInfeasible;
  std::string note;
};

std::vector<double> pack_decision(const linkage::LinkageTopology& topo,
                                  const obj::DecisionVector& d);
obj::DecisionVector unpack_decision(const linkage::LinkageTopology& topo,
                                    int n_samples,
                                    const std::vector<double>& x);

// Deterministic local solve from one start. Reported numbers are re-derived
// by a canonical cold evaluation of the returned decision, so they reproduce
// through evaluate() exactly.
Solution solve(const ProblemSpec& problem, const obj::DecisionVector& x0,
               std::uint64_t seed);

// Start generation --------------------------------------------------------
// Scans assemblable widths, keeps the longest stretch whose transmission
// clears the weighting floor (falls back to the longest assemblable stretch),
// and pre-solves IK across it by a warm neighbour-to-neighbour sweep.
obj::DecisionVector presolve_base(const ProblemSpec& problem,
                                  const linkage::LinkLengths& base);
// All links of a base design scaled by k (symmetry preserved). Width windows
// do not scale along: the tip offset is a task constant, so scaled copies
// must be pre-solved again.
linkage::LinkLengths scaled_lengths(const linkage::LinkageTopology& topo,
                                    const linkage::LinkLengths& base,
                                    double k);
// Multiplicative perturbation (1 + amp*u, u uniform in [-1,1)) of the
// independent lengths plus an inward-only window shrink of up to amp*span
// per edge; contacts are re-derived by an IK sweep at the jittered geometry.
// Falls back to halved amplitudes, then to d itself, when the sweep fails.
// amp = 0 is the identity.
obj::DecisionVector jitter_start(const ProblemSpec& problem,
                                 const obj::DecisionVector& d, double amp,
                                 std::uint64_t seed);

struct MultiStartResult {
  Solution best;
  std::vector<Solution> all;
};

// One solve per (base, scale, seed) triple; start_id is the linear index in
// that order. Starts run in parallel; the reduction is order-independent with
// ties broken by lowest start_id. Throws AllStartsFailed if nothing feasible.
MultiStartResult multi_start(const ProblemSpec& problem,
                             const std::vector<linkage::LinkLengths>& bases,
                             const std::vector<double>& scales,
                             const std::vector<std::uint64_t>& seeds);
MultiStartResult multi_start_serial(
    const ProblemSpec& problem, const std::vector<linkage::LinkLengths>& bases,
    const std::vector<double>& scales,
    const std::vector<std::uint64_t>& seeds);

// The three bundled assemblable base designs used by default runs.
std::vector<linkage::LinkLengths> default_base_designs(
    const linkage::LinkageTopology& topo);

}  // namespace goat::opt
