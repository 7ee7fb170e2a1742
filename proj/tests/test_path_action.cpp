#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "raymin/action.hpp"
#include "raymin/nbody.hpp"
#include "raymin/path.hpp"
#include "raymin/rng.hpp"

using namespace raymin;

namespace {

DiscretePath circular_arc_path(const oracle::Circular2& orb, double t_end, int m) {
  Vec times = uniform_times(t_end, m);
  DiscretePath p;
  p.nd = 4;
  p.times = times;
  p.nodes.resize(times.size() * 4);
  for (std::size_t k = 0; k < times.size(); ++k) {
    Vec x = orb.position(times[k]);
    std::copy(x.begin(), x.end(), p.nodes.begin() + k * 4);
  }
  return p;
}

DiscretePath random_path(Rng& rng, const MassSystem& sys, int m, double t_end) {
  Vec x = oracle::random_config(rng, sys, 2.0, 0.5);
  Vec y = oracle::random_config(rng, sys, 2.0, 0.5);
  DiscretePath p = linear_path(x, y, uniform_times(t_end, m));
  for (int k = 1; k < m; ++k)
    for (int c = 0; c < p.nd; ++c) p.node(k)[c] += 0.15 * rng.normal();
  return p;
}

}  // namespace

TEST_CASE("grid helpers") {
  Vec u = uniform_times(2.0, 4);
  CHECK(u.size() == 5);
  CHECK(u[2] == doctest::Approx(1.0));

  Vec g = graded_times(10.0, 0.01, 1.05);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(10.0));
  for (std::size_t k = 2; k < g.size(); ++k)
    CHECK(g[k] - g[k - 1] > g[k - 1] - g[k - 2]);  // strictly widening

  Vec s = split_times(u);
  CHECK(s.size() == 9);
  CHECK(s[1] == doctest::Approx(0.25));
  CHECK(s.back() == 2.0);
}

TEST_CASE("path resampling preserves endpoints and straight lines") {
  Vec x = {0, 0, 1, 0}, y = {2, 2, 3, 2};
  DiscretePath p = linear_path(x, y, uniform_times(1.0, 8));
  DiscretePath q = resample_path(p, graded_times(1.0, 0.02, 1.2));
  for (int c = 0; c < 4; ++c) {
    CHECK(q.node(0)[c] == doctest::Approx(x[c]));
    CHECK(q.node(q.segments())[c] == doctest::Approx(y[c]));
  }
  // A straight line resamples onto itself.
  for (int k = 0; k <= q.segments(); ++k) {
    double a = q.times[k] / 1.0;
    CHECK(q.node(k)[0] == doctest::Approx((1 - a) * x[0] + a * y[0]).epsilon(1e-12));
  }
}

TEST_CASE("lagrangian basics") {
  auto sys = oracle::two_unit_masses();
  Vec x = {0, 0, 1, 0};
  Vec v0(4, 0.0);
  CHECK(lagrangian(sys, x, v0) == doctest::Approx(1.0));
  Vec v1 = {1, 0, -1, 0};  // |v|_m^2 = 2
  CHECK(lagrangian(sys, x, v1) == doctest::Approx(2.0));

  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    Vec xr = oracle::random_config(rng, sys, 2.0, 0.3);
    Vec vr = rng.normal_vec(4);
    CHECK(lagrangian(sys, xr, vr) >= potential_energy(sys, xr));
    CHECK(potential_energy(sys, xr) > 0);
  }
}

TEST_CASE("discrete action on degenerate and shifted paths") {
  auto sys = oracle::two_unit_masses();
  Vec x = {0, 0, 1.3, 0};
  double T = 0.7;
  DiscretePath constant = linear_path(x, x, uniform_times(T, 16));
  double u = potential_energy(sys, x);
  CHECK(discrete_action(sys, constant, 0.0) == doctest::Approx(T * u).epsilon(1e-13));
  CHECK(discrete_action(sys, constant, 0.4) == doctest::Approx(T * (u + 0.4)).epsilon(1e-13));

  Rng rng(9);
  DiscretePath p = random_path(rng, sys, 12, 1.1);
  double a0 = discrete_action(sys, p, 0.0);
  double a3 = discrete_action(sys, p, 3.0);
  CHECK(a3 - a0 == doctest::Approx(3.0 * p.duration()).epsilon(1e-13));
}

TEST_CASE("discrete action converges to the circular arc action at order 2") {
  oracle::Circular2 orb{1.0};
  auto sys = oracle::two_unit_masses();
  double t_end = orb.period() / 6;
  double exact = orb.arc_action(t_end);
  double prev_err = 0;
  for (int m : {16, 32, 64, 128}) {
    double err = std::fabs(discrete_action(sys, circular_arc_path(orb, t_end, m), 0.0) - exact);
    if (prev_err > 0) {
      double ratio = prev_err / err;
      CHECK(ratio > 3.0);
      CHECK(ratio < 5.5);
    }
    prev_err = err;
  }
}

TEST_CASE("action gradient matches central differences") {
  auto sys = MassSystem::make({1.0, 2.0, 0.7}, 2);
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    DiscretePath p = random_path(rng, sys, 7, 0.9);
    Vec g = discrete_action_gradient(sys, p, 0.3);
    double step = 1e-6;
    for (int j = 1; j < p.segments(); ++j) {
      for (int c = 0; c < p.nd; ++c) {
        DiscretePath pp = p, pm = p;
        pp.node(j)[c] += step;
        pm.node(j)[c] -= step;
        double fd =
            (discrete_action(sys, pp, 0.3) - discrete_action(sys, pm, 0.3)) / (2 * step);
        std::size_t gi = static_cast<std::size_t>(j - 1) * p.nd + c;
        double denom = std::max(1.0, std::fabs(fd));
        CHECK(std::fabs(g[gi] - fd) / denom < 1e-6);
      }
    }
  }
}

TEST_CASE("action gradient is rotation equivariant") {
  auto sys = oracle::two_unit_masses();
  Rng rng(41);
  DiscretePath p = random_path(rng, sys, 10, 1.0);
  Vec g = discrete_action_gradient(sys, p, 0.0);

  double th = 0.77;
  double ct = std::cos(th), st = std::sin(th);
  DiscretePath q = p;
  for (int k = 0; k <= q.segments(); ++k)
    for (int b = 0; b < 2; ++b) {
      double* n = q.node(k) + 2 * b;
      double nx = ct * n[0] - st * n[1];
      double ny = st * n[0] + ct * n[1];
      n[0] = nx;
      n[1] = ny;
    }
  Vec gq = discrete_action_gradient(sys, q, 0.0);
  for (std::size_t j = 0; j < g.size(); j += 2) {
    double rx = ct * g[j] - st * g[j + 1];
    double ry = st * g[j] + ct * g[j + 1];
    CHECK(gq[j] == doctest::Approx(rx).epsilon(1e-10));
    CHECK(gq[j + 1] == doctest::Approx(ry).epsilon(1e-10));
  }
}

TEST_CASE("gradient at a sampled true solution vanishes at order >= 2") {
  oracle::Circular2 orb{1.0};
  auto sys = oracle::two_unit_masses();
  double t_end = orb.period() / 5;
  double prev = 0;
  double worst_order = 10;
  for (int m : {32, 64, 128}) {
    Vec g = discrete_action_gradient(sys, circular_arc_path(orb, t_end, m), 0.0);
    double gmax = 0;
    for (double v : g) gmax = std::max(gmax, std::fabs(v));
    if (prev > 0) worst_order = std::min(worst_order, std::log2(prev / gmax));
    prev = gmax;
  }
  CHECK(worst_order >= 2.0);
}

TEST_CASE("fixed-time minimizer reproduces the circular arc") {
  oracle::Circular2 orb{1.0};
  auto sys = oracle::two_unit_masses();
  double T = orb.period() / 8;
  Vec x = orb.position(0), y = orb.position(T);

  MinimizeOptions opts;
  opts.m = 256;
  MinimizeReport rep = fixed_time_minimizer(sys, x, y, T, 256, opts);
  CHECK(rep.converged);
  double exact = orb.arc_action(T);
  CHECK(std::fabs(rep.action_value - exact) / exact < 1e-4);
  CHECK(rep.min_separation > 10 * collision_eps(sys, x));

  // Swapped endpoints mirror the solve.
  MinimizeReport swp = fixed_time_minimizer(sys, y, x, T, 256, opts);
  CHECK(std::fabs(swp.action_value - rep.action_value) < 1e-10 * std::max(1.0, exact));

  // Rigid rotation of both endpoints.
  double th = 0.41, ct = std::cos(th), st = std::sin(th);
  auto rot = [&](const Vec& v) {
    Vec o(4);
    for (int b = 0; b < 2; ++b) {
      o[2 * b] = ct * v[2 * b] - st * v[2 * b + 1];
      o[2 * b + 1] = st * v[2 * b] + ct * v[2 * b + 1];
    }
    return o;
  };
  MinimizeReport rr = fixed_time_minimizer(sys, rot(x), rot(y), T, 256, opts);
  CHECK(std::fabs(rr.action_value - rep.action_value) < 1e-10 * std::max(1.0, exact));
}

TEST_CASE("fixed-time potential: kinetic lower bound and grid refinement") {
  auto sys = oracle::two_unit_masses();
  Rng rng(53);
  MinimizeOptions opts;
  opts.m = 64;
  opts.max_doublings = 2;
  for (int t = 0; t < 4; ++t) {
    Vec x = oracle::random_config(rng, sys, 1.5, 0.4);
    Vec y = oracle::random_config(rng, sys, 1.5, 0.4);
    double T = 0.3 + rng.uniform();
    PotentialValue pv = fixed_time_potential(sys, x, y, T, opts);
    double d = mass_dist(sys, x, y);
    CHECK(pv.value_raw >= d * d / (2 * T));  // structural, no tolerance
    CHECK(pv.value <= pv.value_raw + 1e-6 * (1 + std::fabs(pv.value_raw)));
  }

  // x == y: the constant path bounds the value.
  Vec x = {0.6, 0, -0.6, 0};
  PotentialValue same = fixed_time_potential(sys, x, x, 0.2, opts);
  CHECK(same.value_raw <= 0.2 * potential_energy(sys, x) + 1e-12);
}

TEST_CASE("fixed-time potential converges at order 2 on the circular benchmark") {
  oracle::Circular2 orb{1.0};
  auto sys = oracle::two_unit_masses();
  double T = orb.period() / 8;
  Vec x = orb.position(0), y = orb.position(T);
  double exact = orb.arc_action(T);

  MinimizeOptions opts;
  opts.max_doublings = 0;
  double prev_err = 0;
  for (int m : {64, 128, 256}) {
    opts.m = m;
    MinimizeReport rep = fixed_time_minimizer(sys, x, y, T, m, opts);
    double err = std::fabs(rep.action_value - exact);
    if (prev_err > 0) {
      double order = std::log2(prev_err / err);
      CHECK(order > 1.5);
      CHECK(order < 2.6);
    }
    prev_err = err;
  }
}

TEST_CASE("free-time potential basics") {
  auto sys = oracle::two_unit_masses();
  MinimizeOptions opts;
  opts.m = 64;
  opts.max_doublings = 1;

  Vec x = {0.5, 0, -0.5, 0};
  FreeTimeValue same = free_time_potential(sys, 0.5, x, x, opts);
  CHECK(same.value == 0.0);
  CHECK(same.t_opt == 0.0);

  Vec y = {1.1, 0.4, -1.1, -0.4};
  FreeTimeValue a = free_time_potential(sys, 0.5, x, y, opts);
  CHECK(a.t_opt > 0);
  CHECK(a.value > 0);

  // Symmetry under endpoint swap.
  FreeTimeValue b = free_time_potential(sys, 0.5, y, x, opts);
  CHECK(std::fabs(a.value - b.value) <= 1e-6 * (1 + std::fabs(a.value)));

  // Monotone in h.
  FreeTimeValue c = free_time_potential(sys, 1.0, x, y, opts);
  CHECK(c.value >= a.value - 1e-6 * (1 + std::fabs(a.value)));

  // The reported minimum beats a coarse duration sweep of phi(x,y,T) + hT.
  for (double f : {0.5, 0.8, 1.25, 2.0}) {
    PotentialValue pv = fixed_time_potential(sys, x, y, a.t_opt * f, opts);
    CHECK(a.value <= (pv.value + 0.5 * pv.t) + 1e-4 * (1 + a.value));
  }
}

TEST_CASE("triangle audit on a small corpus") {
  auto sys = MassSystem::make({1.0, 1.0, 1.0}, 2);
  Rng rng(67);
  std::vector<std::array<Vec, 3>> triples;
  for (int i = 0; i < 2; ++i)
    triples.push_back({oracle::random_config(rng, sys, 1.5, 0.4),
                       oracle::random_config(rng, sys, 1.5, 0.4),
                       oracle::random_config(rng, sys, 1.5, 0.4)});
  MinimizeOptions opts;
  opts.m = 96;
  opts.max_doublings = 1;
  TriangleAudit audit = triangle_inequality_audit(sys, 0.5, triples, opts, 1);
  CHECK(audit.triples == 2);
  CHECK(audit.worst_slack_rel <= 1e-5);
  CHECK(audit.worst_symmetry_gap <= 1e-5);
  CHECK(audit.lower_bound_violations == 0);
}

TEST_CASE("bound constants fit covers fresh samples") {
  auto sys = oracle::two_unit_masses();
  Rng rng(71);
  MinimizeOptions opts;
  opts.m = 64;
  opts.max_doublings = 1;

  // Durations per pair span both regimes of the two-sided bound: short ones
  // where the chord kinetic term binds and moderate ones where the potential
  // slope binds. A narrow band lets spuriously small constants through.
  std::vector<BoundSample> fit;
  for (int i = 0; i < 10; ++i) {
    Vec x = oracle::random_config(rng, sys, 1.6, 0.35);
    Vec y = oracle::random_config(rng, sys, 1.6, 0.35);
    double d = std::max(0.1, mass_dist(sys, x, y));
    for (double u : {-3.0, -1.0, 0.5, 2.0}) {
      BoundSample s;
      s.x = x;
      s.y = y;
      s.t = d * std::pow(2.0, u + rng.uniform(-0.3, 0.3));
      fit.push_back(std::move(s));
    }
  }
  BoundConstants bc = fit_bound_constants(sys, 0.5, fit, opts, 1);
  CHECK(bc.c1 > 0);
  CHECK(bc.c2 > 0);
  CHECK(bc.alpha == doctest::Approx(4 * bc.c1 * bc.c2));
  CHECK(bc.beta == doctest::Approx(4 * bc.c1 * 0.5));
  CHECK(bc.worst_fit_slack <= 0);

  // Held-out free-time values sit under the mu envelope.
  for (int i = 0; i < 4; ++i) {
    Vec x = oracle::random_config(rng, sys, 1.4, 0.4);
    Vec y = oracle::random_config(rng, sys, 1.4, 0.4);
    double h = rng.uniform(0.0, 0.5);
    FreeTimeValue v = free_time_potential(sys, h, x, y, opts);
    CHECK(v.value <= bc.mu(mass_dist(sys, x, y)));
  }
}
