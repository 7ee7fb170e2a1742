#include "raymin/nbody.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace raymin {

MassSystem MassSystem::make(std::vector<double> masses, int dim) {
  require(!masses.empty(), "system needs at least one body");
  require(dim >= 1, "dimension must be positive");
  for (double m : masses) require(m > 0 && std::isfinite(m), "masses must be positive finite");

  MassSystem sys;
  sys.masses = std::move(masses);
  sys.dim = dim;
  int n = sys.bodies();
  sys.coord_mass.resize(static_cast<std::size_t>(n) * dim);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c) sys.coord_mass[static_cast<std::size_t>(i) * dim + c] = sys.masses[i];
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      sys.pair_a.push_back(a);
      sys.pair_b.push_back(b);
      sys.pair_mm.push_back(sys.masses[a] * sys.masses[b]);
    }
  return sys;
}

double mass_inner(const MassSystem& sys, const Vec& x, const Vec& y) {
  check_shape(sys, x, "mass_inner x");
  check_shape(sys, y, "mass_inner y");
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += sys.coord_mass[i] * x[i] * y[i];
  return s;
}

double mass_norm2(const MassSystem& sys, const Vec& x) { return mass_inner(sys, x, x); }

double mass_norm(const MassSystem& sys, const Vec& x) { return std::sqrt(mass_norm2(sys, x)); }

double mass_dist(const MassSystem& sys, const Vec& x, const Vec& y) {
  check_shape(sys, x, "mass_dist x");
  check_shape(sys, y, "mass_dist y");
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    s += sys.coord_mass[i] * d * d;
  }
  return std::sqrt(s);
}

double dual_mass_norm(const MassSystem& sys, const Vec& p) {
  check_shape(sys, p, "dual_mass_norm p");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * p[i] / sys.coord_mass[i];
  return std::sqrt(s);
}

double moment_of_inertia(const MassSystem& sys, const Vec& x) { return mass_norm2(sys, x); }

std::pair<double, double> min_max_separation(const MassSystem& sys, const Vec& x) {
  check_shape(sys, x, "min_max_separation x");
  require(sys.bodies() >= 2, "separations need at least two bodies");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0;
  int d = sys.dim;
  for (int p = 0; p < sys.pairs(); ++p) {
    const double* xa = x.data() + static_cast<std::size_t>(sys.pair_a[p]) * d;
    const double* xb = x.data() + static_cast<std::size_t>(sys.pair_b[p]) * d;
    double r2 = 0;
    for (int c = 0; c < d; ++c) {
      double dd = xa[c] - xb[c];
      r2 += dd * dd;
    }
    lo = std::min(lo, r2);
    hi = std::max(hi, r2);
  }
  return {std::sqrt(lo), std::sqrt(hi)};
}

double collision_eps(const MassSystem& sys, const Vec& x) {
  return 1e-12 * (1.0 + mass_norm(sys, x));
}

double potential_unchecked(const MassSystem& sys, const Vec& x) {
  check_shape(sys, x, "potential x");
  double u = 0;
  potential_and_gradient(sys, x.data(), &u, nullptr);
  return u;
}

double potential_energy(const MassSystem& sys, const Vec& x) {
  check_shape(sys, x, "potential x");
  double u = 0;
  double min_sep = potential_and_gradient(sys, x.data(), &u, nullptr);
  if (min_sep < collision_eps(sys, x))
    throw CollisionSingularity("configuration at or below collision threshold");
  return u;
}

void potential_gradient(const MassSystem& sys, const Vec& x, Vec& g) {
  check_shape(sys, x, "potential_gradient x");
  g.assign(x.size(), 0.0);
  double min_sep = potential_and_gradient(sys, x.data(), nullptr, g.data());
  if (min_sep < collision_eps(sys, x))
    throw CollisionSingularity("configuration at or below collision threshold");
}

double potential_and_gradient(const MassSystem& sys, const double* x, double* u_out,
                              double* g_out) {
  int d = sys.dim;
  double u = 0;
  double min_r2 = std::numeric_limits<double>::infinity();
  for (int p = 0; p < sys.pairs(); ++p) {
    std::size_t ia = static_cast<std::size_t>(sys.pair_a[p]) * d;
    std::size_t ib = static_cast<std::size_t>(sys.pair_b[p]) * d;
    double r2 = 0;
    for (int c = 0; c < d; ++c) {
      double dd = x[ia + c] - x[ib + c];
      r2 += dd * dd;
    }
    min_r2 = std::min(min_r2, r2);
    if (r2 == 0.0) {
      u = std::numeric_limits<double>::infinity();
      continue;
    }
    double r = std::sqrt(r2);
    double inv_r = 1.0 / r;
    u += sys.pair_mm[p] * inv_r;
    if (g_out) {
      double c3 = -sys.pair_mm[p] * inv_r * inv_r * inv_r;
      for (int c = 0; c < d; ++c) {
        double dd = x[ia + c] - x[ib + c];
        g_out[ia + c] += c3 * dd;
        g_out[ib + c] -= c3 * dd;
      }
    }
  }
  if (u_out) *u_out = u;
  return std::sqrt(min_r2);
}

}  // namespace raymin
