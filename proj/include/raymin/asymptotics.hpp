#pragma once

#include <string>
#include <vector>

#include "raymin/dynamics.hpp"
#include "raymin/types.hpp"

// Finite-horizon evidence for the long-time behavior of a trajectory:
// limit-shape regression, per-pair growth exponents, and the standard
// classification (parabolic / hyperbolic / partially hyperbolic /
// superhyperbolic / bounded). Verdicts are evidence at the recorded horizon,
// never proofs.

namespace raymin {

enum class AsymptoticClass {
  Parabolic,
  Hyperbolic,
  PartiallyHyperbolic,
  Superhyperbolic,
  Bounded,
  Unresolved,
};

const char* asymptotic_class_name(AsymptoticClass c);

struct AsymptoticsOptions {
  double fit_fraction = 0.5;      // trailing fraction of the horizon used by fits
  double eps_vel = 1e-3;          // velocity-limit equality threshold (absolute)
  double tol_exponent = 0.05;     // admissible slack around the 2/3..1 window
  double trend_fraction = 0.95;   // monotone-increment fraction for trends
  double bounded_exponent = 0.1;  // R growth exponent below this reads bounded
  double parabolic_h_tol = 1e-6;
  std::size_t min_samples = 16;
};

// Least squares of x(t) against {t, t^{2/3}, 1} per coordinate on the
// trailing window. The linear coefficients are both the limit shape and the
// per-body velocity limits; bounded oscillation (binaries inside a cluster)
// averages out of the slope, which a direct velocity fit would not survive.
struct LimitShapeFit {
  bool ok = false;
  Vec a;                    // nd slopes
  double norm = 0;          // mass norm of a
  double residual = 0;      // mass-norm RMS residual over the window
  double slope_stderr = 0;  // least-squares uncertainty of slope entries
  std::string note;
};

LimitShapeFit estimate_limit_shape(const MassSystem& sys, const Trajectory& tr,
                                   const AsymptoticsOptions& opts = {});

struct PairGrowth {
  int a = 0, b = 0;
  double exponent = 0;        // log-log slope of r_ab on the trailing window
  double trend_fraction = 0;  // fraction of increasing increments
  bool expansive = false;
};

struct ExpansivenessReport {
  std::vector<PairGrowth> pairs;
  bool all_expansive = false;
};

ExpansivenessReport expansiveness_check(const MassSystem& sys, const Trajectory& tr,
                                        const AsymptoticsOptions& opts = {});

// True only with strong evidence on both fronts: R(t)/t grew by >= 10x with a
// monotone trend, and the smallest separation shrank by >= 10x. Minimizers
// must always come back false.
struct SuperhyperbolicEvidence {
  bool verdict = false;
  double R_over_t_growth = 0;
  double r_shrink = 0;
  double R_over_t_trend = 0;  // fraction of increasing increments of R/t
  double r_trend_down = 0;    // fraction of decreasing increments of r
};

SuperhyperbolicEvidence superhyperbolic_probe(const MassSystem& sys, const Trajectory& tr,
                                              const AsymptoticsOptions& opts = {});

struct AsymptoticReport {
  AsymptoticClass cls = AsymptoticClass::Unresolved;
  LimitShapeFit shape;
  std::vector<PairGrowth> growth;
  SuperhyperbolicEvidence super;
  int R_over_t_trend = 0;  // +1 rising, -1 falling, 0 undecided
  double R_exponent = 0;   // log-log slope of the largest separation
  double horizon = 0;
  double h0 = 0;
  std::string note;  // reason when Unresolved
};

AsymptoticReport classify(const MassSystem& sys, const Trajectory& tr,
                          const AsymptoticsOptions& opts = {});

}  // namespace raymin
