#include "raymin/path.hpp"

#include <algorithm>
#include <cmath>

namespace raymin {

bool DiscretePath::uniform(double rel_tol) const {
  if (segments() < 1) return true;
  double dt0 = (times.back() - times.front()) / segments();
  for (int k = 0; k < segments(); ++k)
    if (std::fabs((times[k + 1] - times[k]) - dt0) > rel_tol * dt0) return false;
  return true;
}

void DiscretePath::validate() const {
  require(nd > 0, "path dimension not set");
  require(times.size() >= 2, "path needs at least one segment");
  require(nodes.size() == times.size() * static_cast<std::size_t>(nd),
          "path node storage does not match times");
  for (std::size_t k = 0; k + 1 < times.size(); ++k)
    require(times[k + 1] > times[k], "path times must be strictly increasing");
  require(all_finite(nodes), "path nodes must be finite");
}

Vec uniform_times(double t_end, int m) {
  require(t_end > 0 && m >= 1, "uniform_times needs t_end > 0, m >= 1");
  Vec t(m + 1);
  for (int k = 0; k <= m; ++k) t[k] = t_end * k / m;
  t[m] = t_end;
  return t;
}

Vec graded_times(double t_end, double dt0, double growth, int m_cap) {
  require(t_end > 0 && dt0 > 0 && growth >= 1.0 && m_cap >= 1, "bad graded_times arguments");
  Vec dts;
  double acc = 0, dt = dt0;
  while (acc < t_end && static_cast<int>(dts.size()) < m_cap) {
    dts.push_back(dt);
    acc += dt;
    dt *= growth;
  }
  // Rescale so the grid lands exactly on t_end; preserves the grading shape.
  double s = t_end / acc;
  Vec t(dts.size() + 1);
  t[0] = 0;
  for (std::size_t k = 0; k < dts.size(); ++k) t[k + 1] = t[k] + s * dts[k];
  t.back() = t_end;
  return t;
}

Vec split_times(const Vec& times) {
  Vec out;
  out.reserve(times.size() * 2 - 1);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    out.push_back(times[k]);
    out.push_back(0.5 * (times[k] + times[k + 1]));
  }
  out.push_back(times.back());
  return out;
}

DiscretePath linear_path(const Vec& x, const Vec& y, const Vec& times) {
  require(x.size() == y.size() && !x.empty(), "endpoint shape mismatch");
  DiscretePath p;
  p.nd = static_cast<int>(x.size());
  p.times = times;
  int m = p.segments();
  p.nodes.resize(times.size() * x.size());
  double t0 = times.front(), t1 = times.back();
  for (int k = 0; k <= m; ++k) {
    double a = (times[k] - t0) / (t1 - t0);
    for (std::size_t c = 0; c < x.size(); ++c)
      p.nodes[static_cast<std::size_t>(k) * x.size() + c] = (1 - a) * x[c] + a * y[c];
  }
  p.validate();
  return p;
}

DiscretePath resample_path(const DiscretePath& p, const Vec& new_times) {
  DiscretePath out;
  out.nd = p.nd;
  out.times = new_times;
  out.nodes.resize(new_times.size() * static_cast<std::size_t>(p.nd));
  double lo = p.times.front(), hi = p.times.back();
  for (std::size_t k = 0; k < new_times.size(); ++k) {
    double t = std::clamp(new_times[k], lo, hi);
    auto it = std::upper_bound(p.times.begin(), p.times.end(), t);
    std::size_t j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(
        1, std::min<std::ptrdiff_t>(it - p.times.begin(), static_cast<std::ptrdiff_t>(p.times.size()) - 1)));
    double a = (t - p.times[j - 1]) / (p.times[j] - p.times[j - 1]);
    const double* n0 = p.node(static_cast<int>(j - 1));
    const double* n1 = p.node(static_cast<int>(j));
    double* dst = out.nodes.data() + k * p.nd;
    for (int c = 0; c < p.nd; ++c) dst[c] = (1 - a) * n0[c] + a * n1[c];
  }
  out.validate();
  return out;
}

DiscretePath retime_path(const DiscretePath& p, double new_duration) {
  require(new_duration > 0, "retime needs positive duration");
  DiscretePath out = p;
  double s = new_duration / p.duration();
  for (auto& t : out.times) t = p.times.front() + s * (t - p.times.front());
  return out;
}

}  // namespace raymin
