#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "raymin/asymptotics.hpp"
#include "raymin/dynamics.hpp"
#include "raymin/nbody.hpp"

using namespace raymin;

namespace {

Trajectory synthetic_trajectory(int nd, const std::vector<double>& times,
                                const std::vector<Vec>& configs, double h0) {
  Trajectory tr;
  tr.nd = nd;
  tr.times = times;
  tr.h0 = h0;
  for (const Vec& x : configs) tr.xs.insert(tr.xs.end(), x.begin(), x.end());
  tr.vs.assign(tr.xs.size(), 0.0);
  tr.energies.assign(times.size(), h0);
  tr.action_cum.assign(times.size(), 0.0);
  tr.jm_cum.assign(times.size(), 0.0);
  return tr;
}

Trajectory propagate_sampled(const MassSystem& sys, const Vec& x0, const Vec& v0, double T,
                             double dt) {
  PropagateOptions opts;
  opts.sample_dt = dt;
  return propagate(sys, x0, v0, T, opts);
}

}  // namespace

TEST_CASE("circular orbit classifies as bounded") {
  auto sys = oracle::two_unit_masses();
  oracle::Circular2 orb{1.0};
  Trajectory tr =
      propagate_sampled(sys, orb.position(0), orb.velocity(0), 3 * orb.period(), orb.period() / 64);

  AsymptoticReport rep = classify(sys, tr);
  CHECK(rep.cls == AsymptoticClass::Bounded);
  CHECK(std::fabs(rep.R_exponent) <= 0.05);

  ExpansivenessReport er = expansiveness_check(sys, tr);
  CHECK(!er.all_expansive);
  CHECK(!superhyperbolic_probe(sys, tr).verdict);
}

TEST_CASE("parabolic radial escape classifies as parabolic") {
  auto sys = oracle::two_unit_masses();
  oracle::Parabolic2 esc{1.0};
  Trajectory tr = propagate_sampled(sys, esc.position(0), esc.velocity(0), 200.0, 1.0);

  AsymptoticReport rep = classify(sys, tr);
  CHECK(rep.cls == AsymptoticClass::Parabolic);
  CHECK(rep.shape.ok);
  CHECK(rep.shape.norm <= 0.02);
  for (const PairGrowth& g : rep.growth) {
    CHECK(g.expansive);
    CHECK(g.exponent == doctest::Approx(2.0 / 3.0).epsilon(0.03));
  }
  CHECK(!rep.super.verdict);

  ExpansivenessReport er = expansiveness_check(sys, tr);
  CHECK(er.all_expansive);
}

TEST_CASE("hyperbolic escape recovers the energy-matched limit shape") {
  auto sys = oracle::two_unit_masses();
  double v = std::sqrt(1.5);  // h = v^2 - 1/r0 = 0.5
  Vec x0{0.5, 0, -0.5, 0};
  Vec v0{v, 0, -v, 0};
  Trajectory tr = propagate_sampled(sys, x0, v0, 200.0, 1.0);
  REQUIRE(tr.h0 == doctest::Approx(0.5).epsilon(1e-12));

  AsymptoticReport rep = classify(sys, tr);
  CHECK(rep.cls == AsymptoticClass::Hyperbolic);
  REQUIRE(rep.shape.ok);
  // h = |a|^2/2 in the mass norm.
  CHECK(rep.shape.norm == doctest::Approx(std::sqrt(2 * 0.5)).epsilon(0.02));
  for (const PairGrowth& g : rep.growth) {
    CHECK(g.expansive);
    CHECK(g.exponent == doctest::Approx(1.0).epsilon(0.02));
  }
  CHECK(!rep.super.verdict);
}

TEST_CASE("limit shape estimation is rotation equivariant") {
  auto sys = oracle::two_unit_masses();
  double v = std::sqrt(1.5);
  Trajectory tr = propagate_sampled(sys, {0.5, 0, -0.5, 0}, {v, 0, -v, 0}, 100.0, 1.0);

  double th = 0.7;
  double cs = std::cos(th), sn = std::sin(th);
  Trajectory rot = tr;
  for (std::size_t k = 0; k < tr.samples(); ++k)
    for (int b = 0; b < 2; ++b) {
      double px = tr.x(k)[2 * b], py = tr.x(k)[2 * b + 1];
      rot.xs[k * 4 + 2 * b] = cs * px - sn * py;
      rot.xs[k * 4 + 2 * b + 1] = sn * px + cs * py;
    }

  LimitShapeFit f0 = estimate_limit_shape(sys, tr);
  LimitShapeFit f1 = estimate_limit_shape(sys, rot);
  REQUIRE(f0.ok);
  REQUIRE(f1.ok);
  CHECK(f1.norm == doctest::Approx(f0.norm).epsilon(1e-9));
  for (int b = 0; b < 2; ++b) {
    double ax = f0.a[2 * b], ay = f0.a[2 * b + 1];
    CHECK(f1.a[2 * b] == doctest::Approx(cs * ax - sn * ay).epsilon(1e-8));
    CHECK(f1.a[2 * b + 1] == doctest::Approx(sn * ax + cs * ay).epsilon(1e-8));
  }
}

TEST_CASE("synthetic runaway data trips the superhyperbolic probe") {
  auto sys = MassSystem::make({1.0, 1.0, 1.0}, 2);
  std::vector<double> times;
  std::vector<Vec> configs;
  for (int k = 0; k <= 99; ++k) {
    double t = 1.0 + k;
    times.push_back(t);
    configs.push_back({0, 0, 1.0 / t, 0, t * t, 0});
  }
  Trajectory tr = synthetic_trajectory(6, times, configs, 0.0);

  SuperhyperbolicEvidence ev = superhyperbolic_probe(sys, tr);
  CHECK(ev.verdict);
  CHECK(ev.R_over_t_growth >= 10);
  CHECK(ev.r_shrink >= 10);

  AsymptoticReport rep = classify(sys, tr);
  CHECK(rep.cls == AsymptoticClass::Superhyperbolic);
  CHECK(!rep.shape.ok);  // no finite limit shape is reported alongside
}

TEST_CASE("probe stays false on genuine escapes") {
  auto sys = oracle::two_unit_masses();
  oracle::Parabolic2 esc{1.0};
  Trajectory par = propagate_sampled(sys, esc.position(0), esc.velocity(0), 150.0, 1.0);
  CHECK(!superhyperbolic_probe(sys, par).verdict);

  double v = std::sqrt(1.5);
  Trajectory hyp = propagate_sampled(sys, {0.5, 0, -0.5, 0}, {v, 0, -v, 0}, 150.0, 1.0);
  CHECK(!superhyperbolic_probe(sys, hyp).verdict);
}

TEST_CASE("drifting binary with an escaper reads partially hyperbolic") {
  auto sys = MassSystem::make({1.0, 1.0, 1.0}, 2);
  std::vector<double> times;
  std::vector<Vec> configs;
  for (int k = 0; k <= 299; ++k) {
    double t = 1.0 + k;
    times.push_back(t);
    double cx = 0.5 * t, cy = 0.0;
    double ox = 0.15 * std::cos(5 * t), oy = 0.15 * std::sin(5 * t);
    configs.push_back({cx + ox, cy + oy, cx - ox, cy - oy, -0.8 * t, 0.1});
  }
  Trajectory tr = synthetic_trajectory(6, times, configs, 0.5);

  AsymptoticReport rep = classify(sys, tr);
  CHECK(rep.cls == AsymptoticClass::PartiallyHyperbolic);
  REQUIRE(rep.shape.ok);
  CHECK(rep.shape.a[0] == doctest::Approx(0.5).epsilon(0.01));
  CHECK(rep.shape.a[4] == doctest::Approx(-0.8).epsilon(0.01));
}

TEST_CASE("classification degrades honestly on unusable data") {
  auto sys = oracle::two_unit_masses();
  Vec x0{0.5, 0, -0.5, 0};
  Vec v0(4, 0.0);
  Trajectory fall = propagate(sys, x0, v0, 2.0);
  REQUIRE(fall.termination == Termination::CollisionDetected);
  CHECK_THROWS_AS(classify(sys, fall), InvalidInput);

  oracle::Parabolic2 esc{1.0};
  Trajectory tiny = propagate_sampled(sys, esc.position(0), esc.velocity(0), 1.0, 0.25);
  AsymptoticReport rep = classify(sys, tiny);
  CHECK(rep.cls == AsymptoticClass::Unresolved);
  CHECK(!rep.note.empty());

  LimitShapeFit f = estimate_limit_shape(sys, tiny);
  CHECK(!f.ok);
}
