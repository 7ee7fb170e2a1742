#pragma once

#include <utility>

#include "raymin/types.hpp"

// Mass metric and Newtonian potential on flat configurations.
// Sign convention: U = sum_{a<b} m_a m_b / r_ab > 0, and the equations of
// motion read m_a xdd_a = grad_a U, so potential_gradient returns the force.

namespace raymin {

double mass_inner(const MassSystem& sys, const Vec& x, const Vec& y);
double mass_norm2(const MassSystem& sys, const Vec& x);
double mass_norm(const MassSystem& sys, const Vec& x);
double mass_dist(const MassSystem& sys, const Vec& x, const Vec& y);

// Dual norm on covectors: |p|_*^2 = sum_i |p_i|^2 / m_i.
double dual_mass_norm(const MassSystem& sys, const Vec& p);

// I(x) = <x,x>.
double moment_of_inertia(const MassSystem& sys, const Vec& x);

// Smallest and largest pairwise distance.
std::pair<double, double> min_max_separation(const MassSystem& sys, const Vec& x);

// Pairwise distances closer than this count as a collision.
double collision_eps(const MassSystem& sys, const Vec& x);

// Throws CollisionSingularity when some r_ab < collision_eps(x).
double potential_energy(const MassSystem& sys, const Vec& x);

// No collision check; +inf at an exact collision.
double potential_unchecked(const MassSystem& sys, const Vec& x);

// grad U into g (resized). Throws CollisionSingularity near collision.
void potential_gradient(const MassSystem& sys, const Vec& x, Vec& g);

// Fused evaluation used by integrator right-hand sides; returns min separation
// so callers can do their own collision policy. Does not throw. Accumulates
// into g_out, which the caller must zero; +inf min separation when there are
// no pairs.
double potential_and_gradient(const MassSystem& sys, const double* x, double* u_out,
                              double* g_out);

}  // namespace raymin
