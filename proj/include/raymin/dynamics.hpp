#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "raymin/nbody.hpp"
#include "raymin/types.hpp"

// Initial value problem side: adaptive and symplectic propagation of the
// Newtonian flow, with the action integral and the Jacobi-Maupertuis arc
// length carried along as quadrature states.

namespace raymin {

enum class Termination { HorizonReached, CollisionDetected, BlowUp };

const char* termination_name(Termination t);
Termination termination_from_name(const std::string& name);

struct Trajectory {
  int nd = 0;
  std::vector<double> times;
  Vec xs, vs;       // sample-major, nd doubles per sample
  Vec energies;     // h at each sample
  Vec action_cum;   // integral of the Lagrangian up to each sample
  Vec jm_cum;       // Jacobi-Maupertuis length at energy h0 up to each sample
  double h0 = 0;
  Termination termination = Termination::HorizonReached;
  double max_energy_drift = 0;
  double min_separation_seen = 0;

  std::size_t samples() const { return times.size(); }
  const double* x(std::size_t k) const { return xs.data() + k * static_cast<std::size_t>(nd); }
  const double* v(std::size_t k) const { return vs.data() + k * static_cast<std::size_t>(nd); }
  Vec x_vec(std::size_t k) const { return Vec(x(k), x(k) + nd); }
  Vec v_vec(std::size_t k) const { return Vec(v(k), v(k) + nd); }
};

struct PropagateOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double dt_init = 0;    // 0: choose automatically
  double sample_dt = 0;  // 0: record every accepted step
  bool symplectic = false;
  double dt_fixed = 2e-3;          // step size in symplectic mode
  double collision_factor = 1e-8;  // stop below factor * initial min separation
  double blow_up = 1e12;           // stop when any coordinate magnitude exceeds this
  std::size_t max_steps = 20'000'000;
};

// h = |v|_m^2 / 2 - U(x).
double energy(const MassSystem& sys, const Vec& x, const Vec& v);

// Whether U(x) + h >= 0. The Hill region is all of space for h >= 0.
bool hill_region_contains(const MassSystem& sys, double h, const Vec& x);

Trajectory propagate(const MassSystem& sys, const Vec& x0, const Vec& v0, double t_end,
                     const PropagateOptions& opts = {});

// Columnar text, one sample per row; the header carries masses and summary
// fields so a file round-trips without outside context.
void write_trajectory(const std::string& path, const MassSystem& sys, const Trajectory& tr);
Trajectory read_trajectory(const std::string& path, MassSystem& sys);

}  // namespace raymin
