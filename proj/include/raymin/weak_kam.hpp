#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "raymin/action.hpp"
#include "raymin/asymptotics.hpp"
#include "raymin/dynamics.hpp"
#include "raymin/jm.hpp"
#include "raymin/types.hpp"

namespace raymin {

// Busemann machinery: u_n(x) = phi_h(base, p_n) - phi_h(x, p_n) for horizon
// points p_n marching to infinity along a fixed collision-free direction, and
// the calibrating-ray construction built on top of it.

struct NonConvergent : ConvergenceFailure {
  NonConvergent(const std::string& msg, std::vector<double> incr)
      : ConvergenceFailure(msg), increments(std::move(incr)) {}
  std::vector<double> increments;
};

struct CalibrationFailure : std::runtime_error {
  CalibrationFailure(const std::string& msg, double defect)
      : std::runtime_error(msg), best_defect(defect) {}
  double best_defect = 0;
};

struct BusemannOptions {
  double cauchy_tol = 1e-3;  // per-increment tolerance, scaled by max(1, |x - base|)
  int n_min = 2;             // never stop before this index
  int n_max = 8;             // radii reach rho0 * 2^n_max
  double rho0 = 0;           // 0: 10 |base| + 10
  bool graded = true;        // grade boundary grids when pot leaves them uniform
  MinimizeOptions pot;
  int jobs = 1;
};

struct BusemannCache;

struct BusemannField {
  MassSystem sys;
  double h = 0;
  Vec h_seq;      // h_n per index; constant h unless the caller edits it
  Vec direction;  // unit mass norm, collision-free
  Vec base;
  Vec radii;  // |p_n| = rho0 * 2^n
  BusemannOptions opts;
  std::shared_ptr<BusemannCache> cache;

  Vec horizon_point(int n) const;
};

// Direction is normalized internally and must be collision-free as a
// configuration; base is where every u_n vanishes exactly.
BusemannField make_busemann_field(const MassSystem& sys, double h, const Vec& direction,
                                  const Vec& base, const BusemannOptions& opts = {});

// u_n(x). The base-side potential is cached per index; `detail`, when given,
// receives the x-side free-time solve (its path seeds calibration searches).
double busemann_eval(BusemannField& field, const Vec& x, int n, FreeTimeValue* detail = nullptr);

struct BusemannValue {
  double value = 0;
  int n_used = 0;
  std::vector<double> increments;  // |u_n - u_{n-1}| for n = 1..n_used
  bool converged = false;
};

// Evaluates u_n(x) for increasing n until two consecutive increments fall
// under the tolerance (one confirmation step past the first small one).
// Exhausting n_max without that throws NonConvergent carrying the history;
// the limit is never extrapolated.
BusemannValue busemann_limit(BusemannField& field, const Vec& x);

struct CalibrationOptions {
  int sphere_samples = 0;     // 0: 3 * nd clamped to [8, 32]
  int n_fixed = -1;           // evaluation index; < 0 picks one via busemann_limit
  const Vec* prior = nullptr; // direction hint (need not be normalized)
  double fail_tol = 0.05;     // best defect below -fail_tol * scale aborts
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct CalibrationStep {
  double radius = 0;
  Vec target;     // |target - x| = radius to 1e-10 by construction
  Vec direction;  // (target - x) / radius
  double defect = 0;  // u(target) - u(x) - phi_h(x, target), ~0 at the maximizer
  double u_x = 0, u_y = 0, phi = 0;
  int n_used = 0;
  MinimizeReport path;  // connecting minimizer x -> target
};

// Maximize u(y) - phi_h(x, y) over the mass-norm sphere |y - x| = r: coarse
// sampled directions (the x -> p_n minimizer's sphere crossing is always a
// candidate), then one cap-refinement pass around the best. At a fixed index
// the maximal defect is zero in exact arithmetic, so a strongly negative best
// defect signals a bad u approximation and throws CalibrationFailure.
CalibrationStep calibration_step(BusemannField& field, const Vec& x, double r,
                                 const CalibrationOptions& opts = {});

struct RayOptions {
  double r0 = 1.0;      // first step radius; grows by the golden ratio
  int steps = 5;
  double horizon = 100;
  double sample_dt = 0.25;
  int sphere_samples = 0;
  int n_fixed = -1;  // < 0: picked from a Cauchy run at x0 plus the chain span
  std::uint64_t seed = 0;
  PropagateOptions prop;
  int jobs = 1;
};

struct CalibratingRay {
  std::vector<CalibrationStep> steps;
  MinimizeReport chain;    // whole chain re-minimized as one free-time problem
  double chain_duration = 0;
  Vec junction_times;      // chain times nearest the step joints
  Vec junction_defects;    // one-sided velocity mismatch, mass norm
  double max_junction_defect = 0;
  Vec x_launch;            // equals x0 unless the start had to leave a collision
  Vec v0;                  // energy-exact launch velocity
  double energy = 0;
  double t_offset = 0;     // chain time of the launch point
  int n_used = 0;
  bool complete = false;   // false: a step failed and the ray is partial
  std::string failure;
  Trajectory trajectory;
};

// Chain calibration steps from x0, re-minimize the concatenation as a single
// fixed-endpoint problem, read the launch velocity off its first nodes
// (rescaled so the energy is exactly h), and propagate to the horizon.
// A mid-chain CalibrationFailure yields the partial ray with a failure marker
// instead of throwing.
CalibratingRay generate_calibrating_ray(BusemannField& field, const Vec& x0,
                                        const RayOptions& opts = {});

struct ParabolicOptions {
  Vec direction;  // empty: normalized x0
  RayOptions ray;
  BusemannOptions busemann;
  AsymptoticsOptions classify;
};

struct ParabolicRun {
  CalibratingRay ray;
  AsymptoticReport report;
  Vec direction;  // the field direction actually used
  double energy = 0;
};

// Zero-energy Busemann field anchored at x0, calibrating ray, classification.
ParabolicRun parabolic_from(const MassSystem& sys, const Vec& x0, double horizon,
                            const ParabolicOptions& opts = {});

// Regular lattice in a two-parameter slice x(a, b) = origin + a e1 + b e2,
// a in [-s1, s1] over n1 nodes, b likewise. e1, e2 must be mass-orthonormal.
struct SliceGrid {
  Vec origin;
  Vec e1, e2;
  int n1 = 9, n2 = 9;
  double s1 = 1, s2 = 1;
};

void mass_orthonormalize(const MassSystem& sys, Vec& e1, Vec& e2);
Vec slice_point(const SliceGrid& grid, int i, int j);

// u_n over the whole lattice at a fixed index, row-major; failed evaluations
// come back NaN so the audit masks them.
Vec busemann_grid_values(BusemannField& field, const SliceGrid& grid, int n, int jobs = 1);

struct HjAudit {
  int n1 = 0, n2 = 0;
  std::vector<double> residual;  // row-major; NaN on boundary and masked cells
  std::vector<char> masked;
  int interior = 0, unmasked = 0, passing = 0;
  double pass_fraction = 0;
  double worst = 0;  // largest unmasked residual
  double tol = 0;
};

// Central-difference gradient of u on the slice; residual r = |du|_*^2 / 2 -
// U - h per interior cell. The slice projection can only underestimate the
// full gradient, so the audit is one-sided: it can confirm the subsolution
// inequality but a pass does not bound the off-slice components. Cells closer
// to collision than mask_sep, or touching a failed u value, are masked.
HjAudit hj_subsolution_audit(const MassSystem& sys, double h, const SliceGrid& grid,
                             const Vec& u_values, double tol_hj, double mask_sep = 0.02);

struct ClosednessOptions {
  double horizon = 60;
  double tol = 1e-4;  // slack allowed over the member defect sup
  CertifyOptions cert;
  PropagateOptions prop;
  double sample_dt = 0.1;
  int jobs = 1;
};

struct ClosednessMember {
  Vec x0, v0;
  double h = 0;
  GeodesicCertificate cert;
  double worst_defect = 0;
};

struct ClosednessReport {
  std::vector<ClosednessMember> members;
  ClosednessMember limit;
  double member_defect_sup = 0;
  bool closed = false;  // limit certified with defect <= sup + tol
};

// Certify every member datum (any failure is InvalidInput: the premise of the
// experiment is a sequence of geodesic rays), then the limit datum, and
// compare defects.
ClosednessReport closedness_experiment(const MassSystem& sys,
                                       const std::vector<std::pair<Vec, Vec>>& members,
                                       const std::pair<Vec, Vec>& limit,
                                       const ClosednessOptions& opts = {});

}  // namespace raymin
