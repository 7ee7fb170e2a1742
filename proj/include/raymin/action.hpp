#pragma once

#include <array>
#include <cstdint>

#include "raymin/path.hpp"
#include "raymin/types.hpp"

// Discretized Lagrangian action, boundary-value minimizers, and the action
// potentials phi(x,y,T) (fixed time) and phi_h(x,y) (free time, h >= 0).
//
// Quadrature: forward-difference velocity per segment, midpoint-rule
// potential per segment. The discrete kinetic term then dominates
// |x-y|^2/(2T) exactly (Cauchy-Schwarz over segments), so the kinetic lower
// bound on computed potentials holds structurally, not just approximately.

namespace raymin {

double lagrangian(const MassSystem& sys, const Vec& x, const Vec& v);

double discrete_action(const MassSystem& sys, const DiscretePath& path, double h);

// Gradient w.r.t. interior nodes only, flat (M-1)*nd, node-major.
Vec discrete_action_gradient(const MassSystem& sys, const DiscretePath& path, double h);

struct MinimizeOptions {
  int m = 256;              // target segment count
  int m_coarse = 32;        // cascade entry level
  int restarts = 3;         // perturbed restarts at the coarse level
  double perturb_rel = 0.08;
  std::uint64_t seed = 0;
  int max_iter = 600;       // per cascade level
  double gtol_scale = 1e-8;
  double refine_rel = 1e-6;  // stop grid doubling at this relative action change
  int max_doublings = 3;
  double t_rel_tol = 1e-6;  // golden-section duration tolerance
  // dt0 > 0 switches boundary grids to geometric grading (fast start, slow far
  // end); the default stays uniform.
  double grade_dt0 = 0;
  double grade_growth = 1.04;
  const DiscretePath* warm = nullptr;  // optional initial guess, resampled to the grid
};

struct MinimizeReport {
  DiscretePath path;
  double action_value = 0;   // discrete A_h of the returned path
  double gradient_norm = 0;
  bool converged = false;
  double min_separation = 0;  // interior minimum of r_ab over nodes and midpoints
  int iterations = 0;
  int restarts_used = 0;
};

// Descend discrete_action over interior nodes from a linear interpolant
// (plus perturbed restarts), through a coarse-to-fine grid cascade.
MinimizeReport fixed_time_minimizer(const MassSystem& sys, const Vec& x, const Vec& y, double T,
                                    int m, const MinimizeOptions& opts, double h = 0.0);

struct PotentialValue {
  double value = 0;      // Richardson-extrapolated estimate
  double value_raw = 0;  // finest-grid discrete value; structural bounds apply to this one
  double t = 0;
  int m_final = 0;
  int doublings = 0;
  MinimizeReport report;  // finest level
};

PotentialValue fixed_time_potential(const MassSystem& sys, const Vec& x, const Vec& y, double T,
                                    const MinimizeOptions& opts, double h = 0.0);

struct FreeTimeValue {
  double value = 0;
  double value_raw = 0;
  double t_opt = 0;
  int evals = 0;
  MinimizeReport report;
};

// phi_h(x,y) = inf_T { phi(x,y,T) + h T } by bracketed golden-section search,
// warm-starting each duration from the previous best path. x == y returns 0.
FreeTimeValue free_time_potential(const MassSystem& sys, double h, const Vec& x, const Vec& y,
                                  const MinimizeOptions& opts);

struct TriangleAudit {
  int triples = 0;
  double worst_slack = 0;          // max of phi(x,z) - phi(x,y) - phi(y,z); positive = violation
  double worst_slack_rel = 0;      // slack / max(1, phi(x,z))
  double worst_symmetry_gap = 0;   // max |phi(x,y) - phi(y,x)| / max(1, phi)
  double worst_lower_bound_gap = 0;  // max of |x-y|^2/(2T) - raw value; positive = violation
  int lower_bound_violations = 0;
  std::vector<double> slacks;
};

// Distance-axiom audit of phi_h over configuration triples; fans out across
// `jobs` workers, merged in input order.
TriangleAudit triangle_inequality_audit(const MassSystem& sys, double h,
                                        const std::vector<std::array<Vec, 3>>& triples,
                                        const MinimizeOptions& opts, int jobs = 1);

struct BoundConstants {
  double c1 = 0, c2 = 0;
  double alpha = 0, beta = 0;  // alpha = 4 c1 c2, beta = 4 c1 energy_bound
  double energy_bound = 0;
  int n_samples = 0;
  double worst_fit_slack = 0;  // max of phi - (c1 l^2/T + c2 T/l) over fit samples, <= 0
  double mu(double dist) const;
};

struct BoundSample {
  Vec x, y;
  double t;
};

// Smallest constants (log-grid search over C1, tight C2 given C1, small safety
// margin) with phi(x,y,T) <= C1 l^2/T + C2 T/l at l = 1.01 |x-y| on every
// sample; derives the free-energy envelope mu for energies up to h_max.
BoundConstants fit_bound_constants(const MassSystem& sys, double h_max,
                                   const std::vector<BoundSample>& samples,
                                   const MinimizeOptions& opts, int jobs = 1);

}  // namespace raymin
