#pragma once

#include "raymin/types.hpp"

namespace raymin {

// Piecewise-linear trial path: M+1 nodes at strictly increasing times.
// Uniform grids are the default; graded grids concentrate nodes where the
// motion is fast (near ejection starts) so far targets stay affordable.
struct DiscretePath {
  Vec times;   // M+1
  Vec nodes;   // (M+1) * nd, node-major
  int nd = 0;

  int segments() const { return static_cast<int>(times.size()) - 1; }
  int node_count() const { return static_cast<int>(times.size()); }
  double duration() const { return times.back() - times.front(); }

  double* node(int k) { return nodes.data() + static_cast<std::size_t>(k) * nd; }
  const double* node(int k) const { return nodes.data() + static_cast<std::size_t>(k) * nd; }

  Vec node_vec(int k) const {
    return Vec(node(k), node(k) + nd);
  }

  bool uniform(double rel_tol = 1e-9) const;
  void validate() const;  // strictly increasing times, shape consistency
};

// m segments from 0 to t_end.
Vec uniform_times(double t_end, int m);

// Geometric grading: dt_k = dt0 * g^k, rescaled to land exactly on t_end.
// Node count is implied by (dt0, g); capped at m_cap segments (rescaling
// stretches the grid when the cap binds).
Vec graded_times(double t_end, double dt0, double growth, int m_cap = 20000);

// Insert the midpoint of every interval: M -> 2M segments, same profile.
Vec split_times(const Vec& times);

// Straight-line interpolation between configurations x and y.
DiscretePath linear_path(const Vec& x, const Vec& y, const Vec& times);

// Piecewise-linear resample of an existing path onto new node times covering
// the same span (new endpoints are clamped onto the old ones).
DiscretePath resample_path(const DiscretePath& p, const Vec& new_times);

// Rescale a path's time axis to a new duration, keeping node positions.
DiscretePath retime_path(const DiscretePath& p, double new_duration);

}  // namespace raymin
