#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace raymin {

// Flat configuration / velocity storage: N blocks of d coordinates.
using Vec = std::vector<double>;

struct CollisionSingularity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// N point masses moving in R^d, gravitational constant fixed to 1.
// Owns the mass metric: <x,y> = sum_i m_i (x_i, y_i) on flat N*d arrays.
struct MassSystem {
  std::vector<double> masses;
  int dim = 2;

  // Derived, filled by make():
  std::vector<double> coord_mass;          // length N*d, mass of owning body per coordinate
  std::vector<int> pair_a, pair_b;         // all pairs a<b
  std::vector<double> pair_mm;             // m_a * m_b per pair

  int bodies() const { return static_cast<int>(masses.size()); }
  int nd() const { return bodies() * dim; }
  int pairs() const { return static_cast<int>(pair_a.size()); }
  double total_mass() const {
    double s = 0;
    for (double m : masses) s += m;
    return s;
  }

  static MassSystem make(std::vector<double> masses, int dim);
};

inline void require(bool cond, const char* what) {
  if (!cond) throw InvalidInput(what);
}

inline void check_shape(const MassSystem& sys, const Vec& x, const char* what) {
  if (static_cast<int>(x.size()) != sys.nd())
    throw InvalidInput(std::string(what) + ": expected length " + std::to_string(sys.nd()) +
                       ", got " + std::to_string(x.size()));
}

inline bool all_finite(const Vec& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace raymin
