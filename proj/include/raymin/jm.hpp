#pragma once

#include <utility>
#include <vector>

#include "raymin/action.hpp"
#include "raymin/dynamics.hpp"
#include "raymin/path.hpp"
#include "raymin/types.hpp"

// Jacobi-Maupertuis geometry: the conformal metric 2(h+U) g_m, its length
// functional, and certificates that a trajectory is a geodesic ray in the
// sense that every subarc realizes the free-time action potential.

namespace raymin {

// Length of a discrete path in the JM metric at energy h. The conformal
// factor is evaluated at segment midpoints, matching the action quadrature:
// per segment, chord * sqrt(2(h+U_mid)) <= kinetic + (U_mid+h) dt by AM-GM,
// so jm_length never exceeds the discrete A_h of the same path, exactly.
// Requires h + U > 0 at nodes and midpoints; collision nodes throw.
double jm_length(const MassSystem& sys, double h, const DiscretePath& p);

// Time-RMS of the energy defect 0.5|v|^2 - U - h over the path, with the
// forward-difference velocity and midpoint potential of the action
// quadrature. Vanishes at second order on sampled energy-h solutions.
double energy_residual(const MassSystem& sys, double h, const DiscretePath& p);

enum class CertVerdict { Certified, Refuted, Inconclusive };

const char* cert_verdict_name(CertVerdict v);

struct CertWindow {
  double a = 0, b = 0;         // window endpoints (snapped to sample times)
  double action_value = 0;     // A_h of the trajectory restricted to [a,b]
  double potential_value = 0;  // phi_h between the window's endpoints
  double defect = 0;           // action_value - potential_value
  double tol = 0;
  bool potential_converged = false;
};

struct GeodesicCertificate {
  std::vector<CertWindow> windows;
  CertVerdict verdict = CertVerdict::Inconclusive;
  double worst_defect = 0;
  double worst_rel_defect = 0;
};

struct CertifyOptions {
  int max_windows = 6;
  double min_window = 1e-3;  // stop splitting dyadic windows below this span
  // Explicit windows override the default dyadic plan [0,T], [T/2,T], ...
  std::vector<std::pair<double, double>> windows;
  MinimizeOptions pot;
  int jobs = 1;
};

// A trajectory is accepted as a geodesic ray when the action of every sampled
// window matches the action potential of its endpoints: Certified if all
// defects stay within tol, Refuted only when a window overshoots 10x tol with
// a converged potential value, Inconclusive otherwise.
GeodesicCertificate certify_geodesic_ray(const MassSystem& sys, double h, const Trajectory& tr,
                                         const CertifyOptions& opts = {});

}  // namespace raymin
