#pragma once

// Closed-form two-body references used as independent oracles: values here
// come from the analytic solutions, never from the code under test.

#include <cmath>

#include "raymin/nbody.hpp"
#include "raymin/rng.hpp"
#include "raymin/types.hpp"

namespace oracle {

using raymin::MassSystem;
using raymin::Vec;

// Equal unit masses on a circular orbit of separation D about the origin.
// omega^2 = (m1+m2)/D^3; energy -1/(2D); Lagrangian constant 3/(2D).
struct Circular2 {
  double d;
  double omega() const { return std::sqrt(2.0 / (d * d * d)); }
  double period() const { return 2 * 3.14159265358979323846 / omega(); }
  double energy() const { return -1.0 / (2 * d); }
  double lagrangian() const { return 1.5 / d; }
  double arc_action(double t) const { return lagrangian() * t; }

  Vec position(double t) const {
    double a = omega() * t;
    double r = d / 2;
    return {r * std::cos(a), r * std::sin(a), -r * std::cos(a), -r * std::sin(a)};
  }
  Vec velocity(double t) const {
    double a = omega() * t;
    double r = d / 2;
    double w = omega();
    return {-r * w * std::sin(a), r * w * std::cos(a), r * w * std::sin(a), -r * w * std::cos(a)};
  }
};

// Equal unit masses in symmetric radial release at zero energy:
// separation r(t) = (r0^{3/2} + 3 t)^{2/3}, rdot = sqrt(4/r).
struct Parabolic2 {
  double r0;
  double separation(double t) const { return std::pow(std::pow(r0, 1.5) + 3 * t, 2.0 / 3.0); }
  double separation_rate(double t) const { return 2.0 / std::sqrt(separation(t)); }
  // Bodies on the x axis, symmetric about the origin.
  Vec position(double t) const {
    double r = separation(t) / 2;
    return {r, 0, -r, 0};
  }
  Vec velocity(double t) const {
    double v = separation_rate(t) / 2;
    return {v, 0, -v, 0};
  }
};

inline MassSystem two_unit_masses() { return MassSystem::make({1.0, 1.0}, 2); }

inline Vec random_config(raymin::Rng& rng, const MassSystem& sys, double box, double min_sep) {
  for (int t = 0; t < 2000; ++t) {
    Vec x(sys.nd());
    for (auto& c : x) c = rng.uniform(-box, box);
    if (sys.bodies() < 2 || raymin::min_max_separation(sys, x).first >= min_sep) return x;
  }
  throw std::runtime_error("random_config exhausted");
}

}  // namespace oracle
