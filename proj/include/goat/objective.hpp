#pragma once

#include <map>
#include <string>
#include <vector>

#include "goat/common.hpp"
#include "goat/environment.hpp"
#include "goat/linkage.hpp"
#include "goat/statics.hpp"

namespace goat::obj {

using statics::StaticsParams;

// Coverage weight: 1 - alpha/(sf - phi) - (alpha*(sf - gamma_tilde))^2 on
// sf > phi, -inf at or below phi. gamma_tilde is derived so the peak of the
// curve sits exactly at gamma.
struct WeightParams {
  double alpha = 0.1;
  double phi = 1.5;
  double gamma = 3.5;
  double gamma_tilde = 2.25;
};

double derive_gamma_tilde(double alpha, double phi, double gamma);
WeightParams make_weight_params(double alpha, double phi, double gamma);
double weight(double sf, const WeightParams& wp);

struct TaskConfig {
  double psi = 12.0;        // worst-case lateral offset, mm
  double h_upper = 200.0;   // graspable-height upper bound, mm
  double tip_upper = 120.0; // contact x-coordinate bound, mm
  double stroke = 30.0;     // actuator stroke budget, mm
  double link_lo = 10.0;    // bounds for every link except the ground link
  double link_hi = 200.0;
  double theta_lo = 0.0;    // finger-opening window, rad
  double theta_hi = deg2rad(90.0);
  double eps_loop = 0.01;   // loop-closure tolerance at the cut joint, mm
  int n_samples = 20;
  int cdf_grid_points = 4000;  // density samples shared by the n-1 rectangles
};

void validate_task(const TaskConfig& task);

struct WorkspaceSample {
  double omega = 0.0;
  Vec2 m{}, n{};
  std::map<std::string, double> thetas;
  double h = 0.0;
  double sf = 0.0;
  double weight = 0.0;
  double cdf_delta = 0.0;  // mass of [omega_i, omega_i+1] x [h_i, h_upper]
};

// Free variables: the symmetric length set, one contact x pair per sample,
// and the width window.
struct DecisionVector {
  linkage::LinkLengths lengths;
  std::vector<double> m_x, n_x;
  double omega_lo = 0.0;
  double omega_hi = 0.0;
};

std::vector<double> sample_workspace(double omega_lo, double omega_hi, int n);

struct Evaluation {
  double objective = 0.0;
  double coverage = 0.0;  // sum of the rectangle masses
  std::vector<WorkspaceSample> samples;
  std::string diagnostic;  // non-empty exactly when objective is +inf
};

Evaluation evaluate(const DecisionVector& d, const linkage::LinkageTopology& topo,
                    const env::BivariateLogNormal& model, const TaskConfig& task,
                    const StaticsParams& statics, const WeightParams& wp);
Evaluation evaluate_serial(const DecisionVector& d,
                           const linkage::LinkageTopology& topo,
                           const env::BivariateLogNormal& model,
                           const TaskConfig& task, const StaticsParams& statics,
                           const WeightParams& wp);

// Signed residuals, feasible iff every entry <= 0. Order matches
// constraint_labels: per-sample loop closure, per-sample contact bounds,
// stroke, link bounds, ground-link bounds, per-sample finger-angle windows.
std::vector<double> constraint_residuals(const DecisionVector& d,
                                         const linkage::LinkageTopology& topo,
                                         const TaskConfig& task);
std::vector<std::string> constraint_labels(const linkage::LinkageTopology& topo,
                                           const TaskConfig& task);

// Incremental evaluation for the optimizer: a Probe carries everything needed
// to re-solve one sample in place and re-assemble objective and residuals
// bit-identically with a full pass.
struct SampleState {
  bool ok = false;        // both half solves converged
  bool sf_ok = false;     // transmission well-conditioned
  std::vector<double> warm_u, warm_l;  // half body angles at the solution
  Vec2 d_u{}, d_l{};
  double q_sens = 0.0;  // worse half angle/tip sensitivity; huge near a fold
};

struct Probe {
  Evaluation eval;
  std::vector<double> residuals;
  double max_violation = 0.0;
  std::vector<SampleState> states;
  std::vector<WorkspaceSample> samples;  // pre-assembly per-sample records
};

class Evaluator {
 public:
  Evaluator(const linkage::LinkageTopology& topo, env::BivariateLogNormal model,
            TaskConfig task, StaticsParams statics, WeightParams wp);

  Probe full(const DecisionVector& d, const Probe* prior = nullptr) const;
  Probe full_serial(const DecisionVector& d, const Probe* prior = nullptr) const;
  // Re-solves sample i only; every other sample is copied from base.
  Probe resample(const Probe& base, const DecisionVector& d, int i) const;

  const TaskConfig& task() const { return task_; }
  const linkage::LinkageTopology& topology() const { return topo_; }
  int n_samples() const { return task_.n_samples; }

 private:
  void solve_sample(const DecisionVector& d, const std::vector<double>& omegas,
                    int i, const SampleState* seed, SampleState& state,
                    WorkspaceSample& sample) const;
  void adopt_halves(const linkage::HalfPose& up, const linkage::HalfPose& lo,
                    SampleState& state, WorkspaceSample& sample) const;
  void repair_pass(const DecisionVector& d, const std::vector<double>& omegas,
                   Probe& p) const;
  bool rescue_sample(const DecisionVector& d, const std::vector<double>& omegas,
                     int i, Probe& p) const;
  void assemble(const DecisionVector& d, Probe& p) const;
  Probe run(const DecisionVector& d, const Probe* prior, bool parallel) const;

  const linkage::LinkageTopology& topo_;
  env::BivariateLogNormal model_;
  TaskConfig task_;
  StaticsParams statics_;
  WeightParams wp_;
  double required_ratio_ = 0.0;
  std::vector<double> ref_half_u_, ref_half_l_;  // cold-start seeds
};

}  // namespace goat::obj
