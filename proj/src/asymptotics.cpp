#include "raymin/asymptotics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "raymin/nbody.hpp"

namespace raymin {

namespace {

// Trailing-window sample indices with strictly positive times (log fits).
std::vector<std::size_t> trailing_window(const Trajectory& tr, double fit_fraction) {
  std::vector<std::size_t> idx;
  if (tr.samples() == 0) return idx;
  double t0 = tr.times.front(), t1 = tr.times.back();
  double cut = t1 - fit_fraction * (t1 - t0);
  for (std::size_t k = 0; k < tr.samples(); ++k)
    if (tr.times[k] >= cut && tr.times[k] > 0) idx.push_back(k);
  return idx;
}

double pair_distance(const MassSystem& sys, const double* x, int p) {
  int d = sys.dim;
  std::size_t ia = static_cast<std::size_t>(sys.pair_a[p]) * d;
  std::size_t ib = static_cast<std::size_t>(sys.pair_b[p]) * d;
  double r2 = 0;
  for (int c = 0; c < d; ++c) {
    double dd = x[ia + c] - x[ib + c];
    r2 += dd * dd;
  }
  return std::sqrt(r2);
}

// Fraction of consecutive increments with the requested sign.
double monotone_fraction(const std::vector<double>& v, bool increasing) {
  if (v.size() < 2) return 0;
  int good = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    double d = v[k] - v[k - 1];
    if (increasing ? d > 0 : d < 0) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(v.size() - 1);
}

// Simple linear regression slope of y against x.
double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  double den = n * sxx - sx * sx;
  if (den <= 0) return 0;
  return (n * sxy - sx * sy) / den;
}

bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3>& b) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-300) return false;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (int c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  for (int i = 0; i < 3; ++i) b[i] /= a[i][i];
  return true;
}

}  // namespace

const char* asymptotic_class_name(AsymptoticClass c) {
  switch (c) {
    case AsymptoticClass::Parabolic: return "parabolic";
    case AsymptoticClass::Hyperbolic: return "hyperbolic";
    case AsymptoticClass::PartiallyHyperbolic: return "partially_hyperbolic";
    case AsymptoticClass::Superhyperbolic: return "superhyperbolic";
    case AsymptoticClass::Bounded: return "bounded";
    case AsymptoticClass::Unresolved: return "unresolved";
  }
  return "unresolved";
}

LimitShapeFit estimate_limit_shape(const MassSystem& sys, const Trajectory& tr,
                                   const AsymptoticsOptions& opts) {
  require(tr.nd == sys.nd(), "estimate_limit_shape: trajectory dimension mismatch");
  LimitShapeFit fit;
  fit.a.assign(static_cast<std::size_t>(sys.nd()), 0.0);

  auto idx = trailing_window(tr, opts.fit_fraction);
  if (idx.size() < opts.min_samples) {
    fit.note = "horizon too short for a limit-shape fit";
    return fit;
  }
  if (tr.times[idx.front()] <= 0 ||
      tr.times[idx.back()] < 1.2 * tr.times[idx.front()]) {
    fit.note = "fit window spans too little relative time";
    return fit;
  }

  // Shared Gram matrix for the basis (t, t^{2/3}, 1).
  std::array<std::array<double, 3>, 3> gram{};
  for (std::size_t k : idx) {
    double t = tr.times[k];
    std::array<double, 3> phi{t, std::pow(t, 2.0 / 3.0), 1.0};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) gram[i][j] += phi[i] * phi[j];
  }

  // Invert once via the unit columns; reuse for every coordinate and for the
  // slope variance.
  std::array<std::array<double, 3>, 3> ginv{};
  for (int col = 0; col < 3; ++col) {
    std::array<double, 3> e{};
    e[col] = 1;
    auto a = gram;
    if (!solve3(a, e)) {
      fit.note = "degenerate fit window";
      return fit;
    }
    for (int r = 0; r < 3; ++r) ginv[r][col] = e[r];
  }

  Vec coef(static_cast<std::size_t>(3 * sys.nd()), 0.0);
  for (int c = 0; c < sys.nd(); ++c) {
    std::array<double, 3> rhs{};
    for (std::size_t k : idx) {
      double t = tr.times[k];
      std::array<double, 3> phi{t, std::pow(t, 2.0 / 3.0), 1.0};
      for (int i = 0; i < 3; ++i) rhs[i] += phi[i] * tr.x(k)[c];
    }
    std::array<double, 3> sol{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) sol[i] += ginv[i][j] * rhs[j];
    for (int i = 0; i < 3; ++i) coef[static_cast<std::size_t>(3 * c + i)] = sol[i];
    fit.a[static_cast<std::size_t>(c)] = sol[0];
  }

  double ss = 0;
  for (std::size_t k : idx) {
    double t = tr.times[k];
    std::array<double, 3> phi{t, std::pow(t, 2.0 / 3.0), 1.0};
    for (int c = 0; c < sys.nd(); ++c) {
      double pred = 0;
      for (int i = 0; i < 3; ++i) pred += coef[static_cast<std::size_t>(3 * c + i)] * phi[i];
      double r = tr.x(k)[c] - pred;
      ss += sys.coord_mass[static_cast<std::size_t>(c)] * r * r;
    }
  }
  fit.residual = std::sqrt(ss / static_cast<double>(idx.size()));
  fit.slope_stderr = fit.residual * std::sqrt(std::max(ginv[0][0], 0.0));
  fit.norm = mass_norm(sys, fit.a);
  fit.ok = true;
  return fit;
}

ExpansivenessReport expansiveness_check(const MassSystem& sys, const Trajectory& tr,
                                        const AsymptoticsOptions& opts) {
  require(tr.nd == sys.nd(), "expansiveness_check: trajectory dimension mismatch");
  ExpansivenessReport rep;
  auto idx = trailing_window(tr, opts.fit_fraction);
  rep.all_expansive = !idx.empty() && sys.pairs() > 0;
  for (int p = 0; p < sys.pairs(); ++p) {
    PairGrowth g;
    g.a = sys.pair_a[p];
    g.b = sys.pair_b[p];
    if (idx.size() >= 2) {
      std::vector<double> logt, logr, r;
      logt.reserve(idx.size());
      for (std::size_t k : idx) {
        double rk = pair_distance(sys, tr.x(k), p);
        r.push_back(rk);
        if (rk > 0) {
          logt.push_back(std::log(tr.times[k]));
          logr.push_back(std::log(rk));
        }
      }
      g.exponent = lsq_slope(logt, logr);
      g.trend_fraction = monotone_fraction(r, true);
      g.expansive = g.trend_fraction >= opts.trend_fraction && r.back() > r.front();
    }
    rep.all_expansive = rep.all_expansive && g.expansive;
    rep.pairs.push_back(g);
  }
  return rep;
}

SuperhyperbolicEvidence superhyperbolic_probe(const MassSystem& sys, const Trajectory& tr,
                                              const AsymptoticsOptions& opts) {
  require(tr.nd == sys.nd(), "superhyperbolic_probe: trajectory dimension mismatch");
  SuperhyperbolicEvidence ev;
  if (tr.samples() < opts.min_samples || sys.pairs() == 0) return ev;

  // Skip the leading 5% where R/t is dominated by the start.
  double t0 = tr.times.front(), t1 = tr.times.back();
  double cut = t0 + 0.05 * (t1 - t0);
  std::vector<double> q, rmin;
  for (std::size_t k = 0; k < tr.samples(); ++k) {
    if (tr.times[k] < cut || tr.times[k] <= 0) continue;
    auto [lo, hi] = min_max_separation(sys, tr.x_vec(k));
    q.push_back(hi / tr.times[k]);
    rmin.push_back(lo);
  }
  if (q.size() < 4) return ev;

  ev.R_over_t_growth = q.back() / q.front();
  ev.r_shrink = rmin.front() / rmin.back();
  std::vector<double> q_tail(q.begin() + static_cast<long>(q.size() / 2), q.end());
  std::vector<double> r_tail(rmin.begin() + static_cast<long>(rmin.size() / 2), rmin.end());
  ev.R_over_t_trend = monotone_fraction(q_tail, true);
  ev.r_trend_down = monotone_fraction(r_tail, false);
  ev.verdict = ev.R_over_t_growth >= 10 && ev.r_shrink >= 10 &&
               ev.R_over_t_trend >= opts.trend_fraction && ev.r_trend_down >= opts.trend_fraction;
  return ev;
}

AsymptoticReport classify(const MassSystem& sys, const Trajectory& tr,
                          const AsymptoticsOptions& opts) {
  require(tr.nd == sys.nd(), "classify: trajectory dimension mismatch");
  require(tr.termination != Termination::CollisionDetected,
          "classify: trajectory ends in a collision");

  AsymptoticReport rep;
  rep.h0 = tr.h0;
  rep.horizon = tr.samples() ? tr.times.back() - tr.times.front() : 0;

  if (tr.samples() < opts.min_samples) {
    rep.note = "too few samples";
    return rep;
  }

  auto idx = trailing_window(tr, opts.fit_fraction);
  if (idx.size() < 4) {
    rep.note = "trailing window too small";
    return rep;
  }

  std::vector<double> logt, logR, q;
  for (std::size_t k : idx) {
    auto [lo, hi] = min_max_separation(sys, tr.x_vec(k));
    (void)lo;
    logt.push_back(std::log(tr.times[k]));
    logR.push_back(std::log(hi));
    q.push_back(hi / tr.times[k]);
  }
  rep.R_exponent = lsq_slope(logt, logR);
  double q_up = monotone_fraction(q, true), q_down = monotone_fraction(q, false);
  rep.R_over_t_trend = q_up >= opts.trend_fraction ? 1 : (q_down >= opts.trend_fraction ? -1 : 0);

  ExpansivenessReport exp_rep = expansiveness_check(sys, tr, opts);
  rep.growth = exp_rep.pairs;
  rep.super = superhyperbolic_probe(sys, tr, opts);

  if (std::fabs(rep.R_exponent) <= opts.bounded_exponent) {
    rep.cls = AsymptoticClass::Bounded;
    rep.shape = estimate_limit_shape(sys, tr, opts);
    return rep;
  }

  if (rep.super.verdict) {
    rep.cls = AsymptoticClass::Superhyperbolic;
    return rep;
  }

  rep.shape = estimate_limit_shape(sys, tr, opts);
  if (!rep.shape.ok) {
    rep.note = "limit-shape fit failed: " + rep.shape.note;
    return rep;
  }

  // Growing pairs must sit inside the t^{2/3}..t window, otherwise the data
  // contradicts every non-superhyperbolic class.
  for (const PairGrowth& g : rep.growth) {
    if (!g.expansive) continue;
    if (g.exponent < 2.0 / 3.0 - opts.tol_exponent || g.exponent > 1.0 + opts.tol_exponent) {
      rep.note = "expansive pair exponent outside the admissible window";
      return rep;
    }
  }

  // Per-body velocity limits are the slope rows of the shape fit.
  int d = sys.dim;
  double thresh = std::max(opts.eps_vel, 3 * rep.shape.slope_stderr);
  bool all_zero = true, all_distinct = true;
  for (int i = 0; i < sys.bodies(); ++i) {
    double ni = 0;
    for (int c = 0; c < d; ++c) {
      double v = rep.shape.a[static_cast<std::size_t>(i * d + c)];
      ni += v * v;
    }
    if (std::sqrt(ni) > thresh) all_zero = false;
    for (int j = i + 1; j < sys.bodies(); ++j) {
      double nij = 0;
      for (int c = 0; c < d; ++c) {
        double dv = rep.shape.a[static_cast<std::size_t>(i * d + c)] -
                    rep.shape.a[static_cast<std::size_t>(j * d + c)];
        nij += dv * dv;
      }
      if (std::sqrt(nij) <= thresh) all_distinct = false;
    }
  }

  if (all_zero) {
    if (std::fabs(rep.h0) > opts.parabolic_h_tol) {
      rep.note = "vanishing limit shape but nonzero energy";
      return rep;
    }
    double eps_a = 0.02 * std::max(1.0, std::sqrt(2 * std::max(rep.h0, 0.0)));
    if (rep.shape.norm > eps_a) {
      rep.note = "limit-shape norm above the parabolic threshold";
      return rep;
    }
    rep.cls = AsymptoticClass::Parabolic;
    return rep;
  }
  if (all_distinct) {
    if (rep.h0 <= 1e-12) {
      rep.note = "distinct velocity limits require positive energy";
      return rep;
    }
    rep.cls = AsymptoticClass::Hyperbolic;
    return rep;
  }
  rep.cls = AsymptoticClass::PartiallyHyperbolic;
  return rep;
}

}  // namespace raymin
