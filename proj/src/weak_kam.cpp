#include "raymin/weak_kam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <vector>

#include "raymin/nbody.hpp"
#include "raymin/parallel.hpp"
#include "raymin/path.hpp"
#include "raymin/rng.hpp"

namespace raymin {

namespace {

constexpr double kGolden = 1.6180339887498949;

Vec mass_unit(const MassSystem& sys, const Vec& v) {
  double n = mass_norm(sys, v);
  require(n > 0, "cannot normalize a zero configuration");
  Vec out = v;
  for (double& c : out) c /= n;
  return out;
}

// Far-target boundary problems want geometrically graded grids: the fast
// near-field dynamics sit in the first few nodes, the slow tail gets long
// segments. Node count then grows only logarithmically with the span.
MinimizeOptions graded_pot(const BusemannOptions& o) {
  MinimizeOptions p = o.pot;
  if (o.graded && p.grade_dt0 <= 0) {
    p.grade_dt0 = 1e-3;
    p.grade_growth = 1.015;
  }
  return p;
}

// M^{-1} grad U; the acceleration of the true motion.
void accel(const MassSystem& sys, const Vec& x, Vec& a) {
  potential_gradient(sys, x, a);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] /= sys.coord_mass[i];
}

// Point at cumulative chord length r along a path, linearly interpolated.
// Used only as a direction seed, so the curvature error is harmless.
Vec point_at_arc(const MassSystem& sys, const DiscretePath& p, double r) {
  double cum = 0;
  for (int k = 1; k < p.node_count(); ++k) {
    Vec a = p.node_vec(k - 1), b = p.node_vec(k);
    double seg = mass_dist(sys, a, b);
    if (cum + seg >= r && seg > 0) {
      double w = (r - cum) / seg;
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += w * (b[i] - a[i]);
      return a;
    }
    cum += seg;
  }
  return p.node_vec(p.node_count() - 1);
}

int nearest_time_index(const Vec& times, double t) {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return static_cast<int>(times.size()) - 1;
  int k = static_cast<int>(it - times.begin());
  if (k > 0 && t - times[k - 1] < times[k] - t) --k;
  return k;
}

}  // namespace

struct BusemannCache {
  std::mutex mu;
  std::vector<char> ready;
  Vec base_value;  // phi_{h_n}(base, p_n)
};

Vec BusemannField::horizon_point(int n) const {
  require(n >= 0 && n < static_cast<int>(radii.size()), "horizon index out of range");
  Vec p = direction;
  for (double& c : p) c *= radii[static_cast<std::size_t>(n)];
  return p;
}

BusemannField make_busemann_field(const MassSystem& sys, double h, const Vec& direction,
                                  const Vec& base, const BusemannOptions& opts) {
  require(h >= 0, "busemann field needs h >= 0");
  require(opts.n_max >= 1 && opts.n_min >= 0 && opts.n_min <= opts.n_max,
          "bad busemann index range");
  check_shape(sys, direction, "direction");
  check_shape(sys, base, "base point");

  BusemannField f;
  f.sys = sys;
  f.h = h;
  f.direction = mass_unit(sys, direction);
  require(min_max_separation(sys, f.direction).first > 1e-12,
          "direction must be a collision-free configuration");
  f.base = base;
  double rho0 = opts.rho0 > 0 ? opts.rho0 : 10.0 * mass_norm(sys, base) + 10.0;
  f.radii.resize(static_cast<std::size_t>(opts.n_max) + 1);
  for (std::size_t n = 0; n < f.radii.size(); ++n)
    f.radii[n] = rho0 * std::ldexp(1.0, static_cast<int>(n));
  f.h_seq.assign(f.radii.size(), h);
  f.opts = opts;
  f.cache = std::make_shared<BusemannCache>();
  f.cache->ready.assign(f.radii.size(), 0);
  f.cache->base_value.assign(f.radii.size(), 0.0);
  return f;
}

namespace {

double base_value(BusemannField& f, int n) {
  auto& c = *f.cache;
  {
    std::lock_guard<std::mutex> lk(c.mu);
    if (c.ready[static_cast<std::size_t>(n)]) return c.base_value[static_cast<std::size_t>(n)];
  }
  Vec p = f.horizon_point(n);
  MinimizeOptions pot = graded_pot(f.opts);
  double v = free_time_potential(f.sys, f.h_seq[static_cast<std::size_t>(n)], f.base, p, pot).value;
  std::lock_guard<std::mutex> lk(c.mu);
  c.base_value[static_cast<std::size_t>(n)] = v;  // deterministic, so races are benign
  c.ready[static_cast<std::size_t>(n)] = 1;
  return v;
}

}  // namespace

double busemann_eval(BusemannField& field, const Vec& x, int n, FreeTimeValue* detail) {
  check_shape(field.sys, x, "configuration");
  require(n >= 0 && n < static_cast<int>(field.radii.size()), "horizon index out of range");
  if (mass_dist(field.sys, x, field.base) == 0) {
    if (detail) *detail = FreeTimeValue{};
    return 0.0;  // u_n(base) = 0 exactly, both solves being the same value
  }
  double b = base_value(field, n);
  MinimizeOptions pot = graded_pot(field.opts);
  FreeTimeValue fv = free_time_potential(field.sys, field.h_seq[static_cast<std::size_t>(n)], x,
                                         field.horizon_point(n), pot);
  if (detail) *detail = fv;
  return b - fv.value;
}

BusemannValue busemann_limit(BusemannField& field, const Vec& x) {
  BusemannValue out;
  double tol = field.opts.cauchy_tol * std::max(1.0, mass_dist(field.sys, x, field.base));
  double prev = 0;
  int small_run = 0;
  for (int n = 0; n <= field.opts.n_max; ++n) {
    double u = busemann_eval(field, x, n);
    if (n > 0) {
      double inc = std::fabs(u - prev);
      out.increments.push_back(inc);
      small_run = inc <= tol ? small_run + 1 : 0;
    }
    prev = u;
    out.value = u;
    out.n_used = n;
    // One confirmation step past the first sub-tolerance increment.
    if (n >= field.opts.n_min && small_run >= 2) {
      out.converged = true;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "busemann limit not Cauchy within n_max=" << field.opts.n_max << " (tol " << tol
      << "); increments:";
  for (double d : out.increments) msg << " " << d;
  throw NonConvergent(msg.str(), out.increments);
}

CalibrationStep calibration_step(BusemannField& field, const Vec& x, double r,
                                 const CalibrationOptions& opts) {
  const MassSystem& sys = field.sys;
  check_shape(sys, x, "configuration");
  require(r > 0 && std::isfinite(r), "calibration radius must be positive");

  int n = opts.n_fixed;
  if (n < 0) n = busemann_limit(field, x).n_used;
  require(n < static_cast<int>(field.radii.size()), "horizon index out of range");
  require(field.radii[static_cast<std::size_t>(n)] > 2.0 * (mass_norm(sys, x) + r),
          "horizon point too close for a calibration step");

  MinimizeOptions pot = graded_pot(field.opts);
  double h_n = field.h_seq[static_cast<std::size_t>(n)];
  Vec p_n = field.horizon_point(n);

  FreeTimeValue far_x = free_time_potential(sys, h_n, x, p_n, pot);
  double u_x = base_value(field, n) - far_x.value;

  // Candidate directions on the unit mass sphere. The crossing of the
  // x -> p_n minimizer is where the defect vanishes in exact arithmetic, so
  // it goes first; the rest cover the sphere around it and around the prior.
  Vec seed_dir;
  {
    Vec q = point_at_arc(sys, far_x.report.path, r);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= x[i];
    double qn = mass_norm(sys, q);
    seed_dir = qn > 0 ? mass_unit(sys, q) : field.direction;
  }

  int nd = sys.nd();
  int want = opts.sphere_samples > 0 ? opts.sphere_samples : std::clamp(3 * nd, 8, 32);
  std::vector<Vec> dirs;
  dirs.push_back(seed_dir);
  if (opts.prior) dirs.push_back(mass_unit(sys, *opts.prior));
  Rng rng(opts.seed * 0x9e3779b97f4a7c15ull + 0x5bf03635ull + static_cast<std::uint64_t>(n));
  while (static_cast<int>(dirs.size()) < want) {
    // Half widely scattered, half in a cap around the seed.
    double sigma = (dirs.size() % 2 == 0) ? 2.0 : 0.5;
    Vec g = rng.normal_vec(static_cast<std::size_t>(nd));
    for (int i = 0; i < nd; ++i) g[static_cast<std::size_t>(i)] =
        seed_dir[static_cast<std::size_t>(i)] + sigma * g[static_cast<std::size_t>(i)];
    double gn = mass_norm(sys, g);
    if (gn == 0) continue;
    for (double& c : g) c /= gn;
    dirs.push_back(std::move(g));
  }

  struct Cand {
    double defect = -std::numeric_limits<double>::infinity();
    double u_y = 0, phi = 0;
    FreeTimeValue near;
    bool ok = false;
  };

  auto evaluate = [&](const std::vector<Vec>& ds, std::vector<Cand>& out) {
    out.assign(ds.size(), Cand{});
    parallel_for(static_cast<int>(ds.size()), opts.jobs, [&](int i) {
      Vec y = x;
      for (int c = 0; c < nd; ++c)
        y[static_cast<std::size_t>(c)] += r * ds[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      Cand cand;
      try {
        MinimizeOptions far_pot = pot;
        far_pot.warm = &far_x.report.path;  // endpoints re-pin to (y, p_n)
        double far_y = free_time_potential(sys, h_n, y, p_n, far_pot).value;
        cand.near = free_time_potential(sys, field.h, x, y, pot);
        cand.u_y = u_x + (far_x.value - far_y);
        cand.phi = cand.near.value;
        cand.defect = (far_x.value - far_y) - cand.phi;
        cand.ok = true;
      } catch (const std::exception&) {
        cand.ok = false;  // collision-pinched candidate; skip it
      }
      out[static_cast<std::size_t>(i)] = std::move(cand);
    });
  };

  auto best_of = [](const std::vector<Cand>& cs) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(cs.size()); ++i)
      if (cs[static_cast<std::size_t>(i)].ok &&
          (best < 0 || cs[static_cast<std::size_t>(i)].defect > cs[static_cast<std::size_t>(best)].defect))
        best = i;
    return best;
  };

  std::vector<Cand> cands;
  evaluate(dirs, cands);
  int bi = best_of(cands);
  if (bi < 0) throw CalibrationFailure("every calibration candidate hit a collision", 0.0);

  // One cap-refinement pass around the winner.
  std::vector<Vec> refine;
  refine.push_back(dirs[static_cast<std::size_t>(bi)]);
  int rcount = std::max(4, want / 2);
  while (static_cast<int>(refine.size()) < rcount + 1) {
    Vec g = rng.normal_vec(static_cast<std::size_t>(nd));
    for (int i = 0; i < nd; ++i) g[static_cast<std::size_t>(i)] =
        dirs[static_cast<std::size_t>(bi)][static_cast<std::size_t>(i)] + 0.15 * g[static_cast<std::size_t>(i)];
    double gn = mass_norm(sys, g);
    if (gn == 0) continue;
    for (double& c : g) c /= gn;
    refine.push_back(std::move(g));
  }
  std::vector<Cand> rcands;
  evaluate(refine, rcands);
  int ri = best_of(rcands);

  const Vec* dir = &refine[static_cast<std::size_t>(ri)];
  Cand* win = &rcands[static_cast<std::size_t>(ri)];

  double scale = std::max(1.0, std::fabs(u_x));
  if (win->defect < -opts.fail_tol * scale) {
    std::ostringstream msg;
    msg << "calibration defect " << win->defect << " at radius " << r
        << " is far below zero; the u approximation is unreliable here";
    throw CalibrationFailure(msg.str(), win->defect);
  }

  CalibrationStep step;
  step.radius = r;
  step.direction = *dir;
  step.target = x;
  for (int c = 0; c < nd; ++c)
    step.target[static_cast<std::size_t>(c)] += r * (*dir)[static_cast<std::size_t>(c)];
  step.defect = win->defect;
  step.u_x = u_x;
  step.u_y = win->u_y;
  step.phi = win->phi;
  step.n_used = n;
  step.path = std::move(win->near.report);
  return step;
}

namespace {

// One-sided velocity estimates at an interior node: the chord to a neighbor
// corrected by half a step of the smooth-motion acceleration. Their mismatch
// is O(dt^2) on an exact solution, which is what makes the junction audit
// meaningful at loose grading.
void one_sided_velocities(const MassSystem& sys, const DiscretePath& p, int k, Vec& vl, Vec& vr) {
  int nd = p.nd;
  double dtl = p.times[static_cast<std::size_t>(k)] - p.times[static_cast<std::size_t>(k - 1)];
  double dtr = p.times[static_cast<std::size_t>(k + 1)] - p.times[static_cast<std::size_t>(k)];
  Vec xk = p.node_vec(k);
  Vec a;
  accel(sys, xk, a);
  vl.assign(static_cast<std::size_t>(nd), 0.0);
  vr.assign(static_cast<std::size_t>(nd), 0.0);
  const double* xm = p.node(k - 1);
  const double* xp = p.node(k + 1);
  for (int i = 0; i < nd; ++i) {
    vl[static_cast<std::size_t>(i)] =
        (xk[static_cast<std::size_t>(i)] - xm[i]) / dtl + 0.5 * dtl * a[static_cast<std::size_t>(i)];
    vr[static_cast<std::size_t>(i)] =
        (xp[i] - xk[static_cast<std::size_t>(i)]) / dtr - 0.5 * dtr * a[static_cast<std::size_t>(i)];
  }
}

}  // namespace

CalibratingRay generate_calibrating_ray(BusemannField& field, const Vec& x0,
                                        const RayOptions& opts) {
  const MassSystem& sys = field.sys;
  check_shape(sys, x0, "start configuration");
  require(opts.steps >= 1 && opts.r0 > 0 && opts.horizon > 0, "bad ray options");

  CalibratingRay ray;

  // Total chain span decides which horizon index the whole chain can share:
  // every target must stay well inside the sphere of p_n.
  double span = 0, rk = opts.r0;
  for (int k = 0; k < opts.steps; ++k, rk *= kGolden) span += rk;
  int n = opts.n_fixed;
  if (n < 0) {
    try {
      n = busemann_limit(field, x0).n_used;
    } catch (const NonConvergent&) {
      n = field.opts.n_max;  // use the deepest horizon rather than giving up
    }
    double need = 10.0 * (mass_norm(sys, x0) + span);
    while (n < static_cast<int>(field.radii.size()) - 1 &&
           field.radii[static_cast<std::size_t>(n)] < need)
      ++n;
  }
  ray.n_used = n;

  Vec x_cur = x0;
  const Vec* prior = nullptr;
  ray.complete = true;
  rk = opts.r0;
  for (int k = 0; k < opts.steps; ++k, rk *= kGolden) {
    CalibrationOptions co;
    co.n_fixed = n;
    co.prior = prior;
    co.sphere_samples = opts.sphere_samples;
    co.seed = opts.seed + static_cast<std::uint64_t>(k) * 1000003ull;
    co.jobs = opts.jobs;
    try {
      ray.steps.push_back(calibration_step(field, x_cur, rk, co));
    } catch (const CalibrationFailure& e) {
      ray.complete = false;
      ray.failure = e.what();
      break;
    }
    x_cur = ray.steps.back().target;
    prior = &ray.steps.back().direction;
  }
  if (ray.steps.empty()) return ray;  // nothing to launch from

  // Concatenate the legs and re-minimize the whole chain as one free-time
  // problem; per-leg solutions are only stationary leg by leg.
  DiscretePath concat;
  concat.nd = sys.nd();
  double t_cum = 0;
  for (std::size_t k = 0; k < ray.steps.size(); ++k) {
    const DiscretePath& leg = ray.steps[k].path.path;
    int start = k == 0 ? 0 : 1;  // junction node equals the previous leg's end
    for (int j = start; j < leg.node_count(); ++j) {
      concat.times.push_back(t_cum + leg.times[static_cast<std::size_t>(j)] -
                             leg.times.front());
      const double* nj = leg.node(j);
      concat.nodes.insert(concat.nodes.end(), nj, nj + leg.nd);
    }
    t_cum += leg.duration();
    if (k + 1 < ray.steps.size()) ray.junction_times.push_back(t_cum);
  }

  MinimizeOptions pot = graded_pot(field.opts);
  pot.warm = &concat;
  FreeTimeValue polished =
      free_time_potential(sys, field.h, x0, ray.steps.back().target, pot);
  ray.chain = polished.report;
  ray.chain_duration = polished.t_opt;

  // Junction times live on the concatenated clock; map them onto the
  // re-optimized duration before reading defects off the polished path.
  double tscale = polished.t_opt / t_cum;
  const DiscretePath& chain = ray.chain.path;
  for (double& tj : ray.junction_times) {
    tj *= tscale;
    int kj = nearest_time_index(chain.times, tj);
    kj = std::clamp(kj, 1, chain.node_count() - 2);
    tj = chain.times[static_cast<std::size_t>(kj)];
    Vec vl, vr, diff;
    one_sided_velocities(sys, chain, kj, vl, vr);
    diff = vl;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= vr[i];
    ray.junction_defects.push_back(mass_norm(sys, diff));
  }
  for (double d : ray.junction_defects)
    ray.max_junction_defect = std::max(ray.max_junction_defect, d);

  // Launch state. Collision starts cannot be integrated from t = 0, so the
  // launch point slides forward to the first comfortably separated node.
  int j0 = 0;
  double sep_floor = 0.05 * std::min(opts.r0, 1.0);
  while (j0 + 2 < chain.node_count() &&
         min_max_separation(sys, chain.node_vec(j0)).first < sep_floor)
    ++j0;
  ray.x_launch = chain.node_vec(j0);
  ray.t_offset = chain.times[static_cast<std::size_t>(j0)];

  Vec v_est(static_cast<std::size_t>(chain.nd), 0.0);
  {
    Vec a;
    accel(sys, ray.x_launch, a);
    if (j0 == 0) {
      double dt = chain.times[1] - chain.times[0];
      const double* x1 = chain.node(1);
      const double* xa = chain.node(0);
      for (int i = 0; i < chain.nd; ++i)
        v_est[static_cast<std::size_t>(i)] =
            (x1[i] - xa[i]) / dt - 0.5 * dt * a[static_cast<std::size_t>(i)];
    } else {
      // Centered difference once off the collision start.
      double dt2 = chain.times[static_cast<std::size_t>(j0 + 1)] -
                   chain.times[static_cast<std::size_t>(j0 - 1)];
      const double* xp = chain.node(j0 + 1);
      const double* xm = chain.node(j0 - 1);
      for (int i = 0; i < chain.nd; ++i)
        v_est[static_cast<std::size_t>(i)] = (xp[i] - xm[i]) / dt2;
    }
  }
  double speed = std::sqrt(2.0 * (field.h + potential_energy(sys, ray.x_launch)));
  ray.v0 = mass_unit(sys, v_est);
  for (double& c : ray.v0) c *= speed;
  ray.energy = energy(sys, ray.x_launch, ray.v0);

  PropagateOptions prop = opts.prop;
  prop.sample_dt = opts.sample_dt;
  double t_end = std::max(opts.horizon - ray.t_offset, 1.0);
  ray.trajectory = propagate(sys, ray.x_launch, ray.v0, t_end, prop);
  return ray;
}

ParabolicRun parabolic_from(const MassSystem& sys, const Vec& x0, double horizon,
                            const ParabolicOptions& opts) {
  check_shape(sys, x0, "start configuration");
  require(horizon > 0, "horizon must be positive");

  Vec dir = opts.direction;
  if (dir.empty()) {
    require(mass_norm(sys, x0) > 0,
            "a collision start needs an explicit escape direction");
    dir = x0;
  }

  ParabolicRun run;
  BusemannField field = make_busemann_field(sys, 0.0, dir, x0, opts.busemann);
  run.direction = field.direction;

  RayOptions ro = opts.ray;
  ro.horizon = horizon;
  run.ray = generate_calibrating_ray(field, x0, ro);
  run.energy = run.ray.energy;
  if (run.ray.trajectory.samples() > 0)
    run.report = classify(sys, run.ray.trajectory, opts.classify);
  return run;
}

void mass_orthonormalize(const MassSystem& sys, Vec& e1, Vec& e2) {
  check_shape(sys, e1, "slice direction");
  check_shape(sys, e2, "slice direction");
  e1 = mass_unit(sys, e1);
  double c = mass_inner(sys, e1, e2);
  for (std::size_t i = 0; i < e2.size(); ++i) e2[i] -= c * e1[i];
  require(mass_norm(sys, e2) > 1e-12, "slice directions are collinear");
  e2 = mass_unit(sys, e2);
}

Vec slice_point(const SliceGrid& grid, int i, int j) {
  double a = grid.n1 > 1 ? -grid.s1 + 2.0 * grid.s1 * i / (grid.n1 - 1) : 0.0;
  double b = grid.n2 > 1 ? -grid.s2 + 2.0 * grid.s2 * j / (grid.n2 - 1) : 0.0;
  Vec x = grid.origin;
  for (std::size_t c = 0; c < x.size(); ++c) x[c] += a * grid.e1[c] + b * grid.e2[c];
  return x;
}

Vec busemann_grid_values(BusemannField& field, const SliceGrid& grid, int n, int jobs) {
  require(grid.n1 >= 3 && grid.n2 >= 3, "slice lattice needs at least 3x3 nodes");
  base_value(field, n);  // fill the shared cache before fanning out
  Vec out(static_cast<std::size_t>(grid.n1) * static_cast<std::size_t>(grid.n2),
          std::numeric_limits<double>::quiet_NaN());
  parallel_for(grid.n1 * grid.n2, jobs, [&](int idx) {
    int i = idx / grid.n2, j = idx % grid.n2;
    try {
      out[static_cast<std::size_t>(idx)] = busemann_eval(field, slice_point(grid, i, j), n);
    } catch (const std::exception&) {
      // leave NaN; the audit masks it
    }
  });
  return out;
}

HjAudit hj_subsolution_audit(const MassSystem& sys, double h, const SliceGrid& grid,
                             const Vec& u_values, double tol_hj, double mask_sep) {
  require(grid.n1 >= 3 && grid.n2 >= 3, "slice lattice needs at least 3x3 nodes");
  require(static_cast<int>(u_values.size()) == grid.n1 * grid.n2,
          "u grid size does not match the lattice");
  require(std::fabs(mass_norm(sys, grid.e1) - 1.0) < 1e-8 &&
              std::fabs(mass_norm(sys, grid.e2) - 1.0) < 1e-8 &&
              std::fabs(mass_inner(sys, grid.e1, grid.e2)) < 1e-8,
          "slice directions must be mass-orthonormal");

  HjAudit audit;
  audit.n1 = grid.n1;
  audit.n2 = grid.n2;
  audit.tol = tol_hj;
  audit.residual.assign(u_values.size(), std::numeric_limits<double>::quiet_NaN());
  audit.masked.assign(u_values.size(), 1);
  audit.worst = -std::numeric_limits<double>::infinity();

  double d1 = 2.0 * grid.s1 / (grid.n1 - 1);
  double d2 = 2.0 * grid.s2 / (grid.n2 - 1);
  auto at = [&](int i, int j) { return u_values[static_cast<std::size_t>(i * grid.n2 + j)]; };

  for (int i = 1; i + 1 < grid.n1; ++i) {
    for (int j = 1; j + 1 < grid.n2; ++j) {
      ++audit.interior;
      std::size_t idx = static_cast<std::size_t>(i * grid.n2 + j);
      double uc = at(i, j), ue = at(i + 1, j), uw = at(i - 1, j), un = at(i, j + 1),
             us = at(i, j - 1);
      Vec x = slice_point(grid, i, j);
      double sep = min_max_separation(sys, x).first;
      bool ok = std::isfinite(uc) && std::isfinite(ue) && std::isfinite(uw) &&
                std::isfinite(un) && std::isfinite(us) && sep >= mask_sep;
      if (!ok) continue;
      // Mass-orthonormal axes make the slice-projected dual norm the plain
      // euclidean norm of the two difference quotients.
      double g1 = (ue - uw) / (2.0 * d1);
      double g2 = (un - us) / (2.0 * d2);
      double r = 0.5 * (g1 * g1 + g2 * g2) - potential_unchecked(sys, x) - h;
      audit.residual[idx] = r;
      audit.masked[idx] = 0;
      ++audit.unmasked;
      if (r <= tol_hj) ++audit.passing;
      audit.worst = std::max(audit.worst, r);
    }
  }
  audit.pass_fraction = audit.unmasked > 0
                            ? static_cast<double>(audit.passing) / audit.unmasked
                            : 0.0;
  return audit;
}

ClosednessReport closedness_experiment(const MassSystem& sys,
                                       const std::vector<std::pair<Vec, Vec>>& members,
                                       const std::pair<Vec, Vec>& limit,
                                       const ClosednessOptions& opts) {
  require(!members.empty(), "closedness experiment needs at least one member");

  auto run_one = [&](const Vec& x0, const Vec& v0) {
    ClosednessMember m;
    m.x0 = x0;
    m.v0 = v0;
    m.h = energy(sys, x0, v0);
    require(m.h >= -1e-9, "free-time certificates need nonnegative energy");
    PropagateOptions prop = opts.prop;
    prop.sample_dt = opts.sample_dt;
    Trajectory tr = propagate(sys, x0, v0, opts.horizon, prop);
    CertifyOptions co = opts.cert;
    m.cert = certify_geodesic_ray(sys, std::max(m.h, 0.0), tr, co);
    m.worst_defect = m.cert.worst_defect;
    return m;
  };

  ClosednessReport rep;
  rep.members.resize(members.size());
  parallel_for(static_cast<int>(members.size()), opts.jobs, [&](int i) {
    rep.members[static_cast<std::size_t>(i)] =
        run_one(members[static_cast<std::size_t>(i)].first,
                members[static_cast<std::size_t>(i)].second);
  });
  for (std::size_t i = 0; i < rep.members.size(); ++i) {
    const auto& m = rep.members[i];
    if (m.cert.verdict != CertVerdict::Certified) {
      std::ostringstream msg;
      msg << "sequence member " << i << " is not a certified geodesic ray (verdict "
          << cert_verdict_name(m.cert.verdict) << ", defect " << m.worst_defect << ")";
      throw InvalidInput(msg.str());
    }
    rep.member_defect_sup = std::max(rep.member_defect_sup, m.worst_defect);
  }

  rep.limit = run_one(limit.first, limit.second);
  rep.closed = rep.limit.cert.verdict == CertVerdict::Certified &&
               rep.limit.worst_defect <= rep.member_defect_sup + opts.tol;
  return rep;
}

}  // namespace raymin
