#include <cmath>
#include <cstdio>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "raymin/dynamics.hpp"
#include "raymin/nbody.hpp"
#include "raymin/rng.hpp"

using namespace raymin;

namespace {

double final_time(const Trajectory& tr) { return tr.times.back(); }

Vec final_x(const Trajectory& tr) { return tr.x_vec(tr.samples() - 1); }
Vec final_v(const Trajectory& tr) { return tr.v_vec(tr.samples() - 1); }

}  // namespace

TEST_CASE("circular orbit propagation matches closed form") {
  auto sys = oracle::two_unit_masses();
  oracle::Circular2 orb{1.0};
  double T = 3 * orb.period();

  Trajectory tr = propagate(sys, orb.position(0), orb.velocity(0), T);

  CHECK(tr.termination == Termination::HorizonReached);
  CHECK(final_time(tr) == doctest::Approx(T).epsilon(1e-12));
  CHECK(tr.samples() > 50);
  for (std::size_t k = 1; k < tr.samples(); ++k) CHECK(tr.times[k] > tr.times[k - 1]);

  CHECK(tr.h0 == doctest::Approx(orb.energy()).epsilon(1e-12));
  CHECK(tr.max_energy_drift <= 1e-8);
  CHECK(mass_dist(sys, final_x(tr), orb.position(T)) <= 1e-6);
  CHECK(mass_dist(sys, final_v(tr), orb.velocity(T)) <= 1e-6);

  // Both quadrature states have constant integrands on this orbit.
  CHECK(tr.action_cum.back() == doctest::Approx(orb.arc_action(T)).epsilon(1e-8));
  CHECK(tr.jm_cum.back() == doctest::Approx(T).epsilon(1e-8));
  for (std::size_t k = 0; k < tr.samples(); ++k)
    CHECK(tr.energies[k] == doctest::Approx(orb.energy()).epsilon(1e-7));
  CHECK(tr.min_separation_seen == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("uniform sampling lands on the requested grid") {
  auto sys = oracle::two_unit_masses();
  oracle::Circular2 orb{1.0};
  double T = orb.period();

  PropagateOptions opts;
  opts.sample_dt = T / 16;
  Trajectory tr = propagate(sys, orb.position(0), orb.velocity(0), T, opts);

  REQUIRE(tr.samples() == 17);
  for (std::size_t k = 0; k < tr.samples(); ++k) {
    double tk = static_cast<double>(k) * opts.sample_dt;
    CHECK(tr.times[k] == doctest::Approx(tk).epsilon(1e-10));
    CHECK(mass_dist(sys, tr.x_vec(k), orb.position(tr.times[k])) <= 1e-7);
  }
}

TEST_CASE("parabolic escape follows the two-thirds power law") {
  auto sys = oracle::two_unit_masses();
  oracle::Parabolic2 esc{1.0};
  double T = 20;

  Trajectory tr = propagate(sys, esc.position(0), esc.velocity(0), T);

  CHECK(tr.termination == Termination::HorizonReached);
  CHECK(std::fabs(tr.h0) <= 1e-13);
  CHECK(tr.max_energy_drift <= 1e-9);
  auto [lo, hi] = min_max_separation(sys, final_x(tr));
  CHECK(lo == doctest::Approx(esc.separation(T)).epsilon(1e-8));
  CHECK(hi == doctest::Approx(esc.separation(T)).epsilon(1e-8));
}

TEST_CASE("head-on free fall ends in a detected collision") {
  auto sys = oracle::two_unit_masses();
  Vec x0{0.5, 0, -0.5, 0};
  Vec v0(4, 0.0);
  // Radial fall r'' = -2/r^2 from rest at r0 = 1 reaches r = 0 at pi/4.
  double t_c = 3.14159265358979323846 / 4;

  Trajectory tr = propagate(sys, x0, v0, 2.0);

  CHECK(tr.termination == Termination::CollisionDetected);
  CHECK(final_time(tr) == doctest::Approx(t_c).epsilon(1e-5));
  CHECK(tr.min_separation_seen <= 1.1e-8);
  CHECK(final_time(tr) < 2.0);
}

TEST_CASE("time reversal returns to the initial state") {
  auto sys = MassSystem::make({1.0, 2.0, 0.7}, 2);
  Rng rng(23);  // stays well separated; close encounters would amplify error
  Vec x0 = oracle::random_config(rng, sys, 1.2, 0.8);
  Vec v0(sys.nd());
  for (auto& c : v0) c = rng.uniform(-0.3, 0.3);

  Trajectory fwd = propagate(sys, x0, v0, 1.0);
  REQUIRE(fwd.termination == Termination::HorizonReached);
  REQUIRE(fwd.min_separation_seen > 0.5);
  Vec x1 = final_x(fwd), v1 = final_v(fwd);
  for (auto& c : v1) c = -c;
  Trajectory back = propagate(sys, x1, v1, 1.0);
  REQUIRE(back.termination == Termination::HorizonReached);

  Vec vb = final_v(back);
  for (auto& c : vb) c = -c;
  CHECK(mass_dist(sys, final_x(back), x0) <= 1e-8);
  CHECK(mass_dist(sys, vb, v0) <= 1e-8);
}

TEST_CASE("symplectic mode pins the energy over long horizons") {
  auto sys = oracle::two_unit_masses();
  oracle::Circular2 orb{1.0};
  double T = 10 * orb.period();

  PropagateOptions opts;
  opts.symplectic = true;
  opts.dt_fixed = 2e-3;
  opts.sample_dt = orb.period();
  Trajectory tr = propagate(sys, orb.position(0), orb.velocity(0), T, opts);

  CHECK(tr.termination == Termination::HorizonReached);
  CHECK(tr.max_energy_drift <= 1e-9);
  CHECK(tr.action_cum.back() == doctest::Approx(orb.arc_action(final_time(tr))).epsilon(1e-6));
  CHECK(tr.jm_cum.back() == doctest::Approx(final_time(tr)).epsilon(1e-6));
  CHECK(mass_dist(sys, final_x(tr), orb.position(final_time(tr))) <= 1e-4);
}

TEST_CASE("symplectic stepping is fourth order in the step size") {
  auto sys = oracle::two_unit_masses();
  oracle::Circular2 orb{1.0};
  double T = orb.period();

  auto pos_err = [&](double dt) {
    PropagateOptions opts;
    opts.symplectic = true;
    opts.dt_fixed = dt;
    Trajectory tr = propagate(sys, orb.position(0), orb.velocity(0), T, opts);
    return mass_dist(sys, final_x(tr), orb.position(final_time(tr)));
  };

  double e1 = pos_err(T / 250);
  double e2 = pos_err(T / 500);
  CHECK(e1 / e2 > 11.0);
  CHECK(e1 / e2 < 22.0);
}

TEST_CASE("trajectory text files round trip exactly") {
  auto sys = MassSystem::make({1.0, 2.0, 0.7}, 2);
  Rng rng(89);
  Vec x0 = oracle::random_config(rng, sys, 1.2, 0.8);
  Vec v0(sys.nd());
  for (auto& c : v0) c = rng.uniform(-0.4, 0.4);

  PropagateOptions opts;
  opts.sample_dt = 0.1;
  Trajectory tr = propagate(sys, x0, v0, 1.0, opts);

  std::string path = "roundtrip_traj.txt";
  write_trajectory(path, sys, tr);
  MassSystem sys2;
  Trajectory rd = read_trajectory(path, sys2);
  std::remove(path.c_str());

  REQUIRE(sys2.bodies() == sys.bodies());
  CHECK(sys2.dim == sys.dim);
  for (int i = 0; i < sys.bodies(); ++i) CHECK(sys2.masses[i] == sys.masses[i]);
  CHECK(rd.h0 == tr.h0);
  CHECK(rd.termination == tr.termination);
  CHECK(rd.max_energy_drift == tr.max_energy_drift);
  CHECK(rd.min_separation_seen == tr.min_separation_seen);
  REQUIRE(rd.samples() == tr.samples());
  for (std::size_t k = 0; k < tr.samples(); ++k) {
    CHECK(rd.times[k] == tr.times[k]);
    for (int c = 0; c < tr.nd; ++c) {
      CHECK(rd.x(k)[c] == tr.x(k)[c]);
      CHECK(rd.v(k)[c] == tr.v(k)[c]);
    }
    CHECK(rd.energies[k] == tr.energies[k]);
    CHECK(rd.action_cum[k] == tr.action_cum[k]);
    CHECK(rd.jm_cum[k] == tr.jm_cum[k]);
  }
}

TEST_CASE("blow-up guard stops runaway escapes") {
  auto sys = oracle::two_unit_masses();
  Vec x0{0.5, 0, -0.5, 0};
  Vec v0{5, 0, -5, 0};

  PropagateOptions opts;
  opts.blow_up = 50;
  Trajectory tr = propagate(sys, x0, v0, 100.0, opts);

  CHECK(tr.termination == Termination::BlowUp);
  CHECK(final_time(tr) < 100.0);
  double mx = 0;
  Vec xf = final_x(tr);
  for (double c : xf) mx = std::max(mx, std::fabs(c));
  CHECK(mx == doctest::Approx(50.0).epsilon(1e-6));
}

TEST_CASE("energy and hill region helpers") {
  auto sys = oracle::two_unit_masses();
  Vec x{0.5, 0, -0.5, 0};  // U = 1
  Vec v{0.3, 0.1, -0.2, 0.4};
  double kin = 0.5 * (0.09 + 0.01 + 0.04 + 0.16);
  CHECK(energy(sys, x, v) == doctest::Approx(kin - 1.0).epsilon(1e-14));

  CHECK(hill_region_contains(sys, -0.3, x));
  Vec far{5, 0, -5, 0};  // U = 0.1
  CHECK(!hill_region_contains(sys, -0.3, far));
  CHECK(hill_region_contains(sys, 0.0, far));
  CHECK(hill_region_contains(sys, 1.0, far));
}

TEST_CASE("propagate validates its inputs") {
  auto sys = oracle::two_unit_masses();
  Vec x0{0.5, 0, -0.5, 0};
  Vec v0(4, 0.0);
  CHECK_THROWS_AS(propagate(sys, x0, v0, 0.0), InvalidInput);
  CHECK_THROWS_AS(propagate(sys, x0, v0, -1.0), InvalidInput);
  CHECK_THROWS_AS(propagate(sys, Vec{1, 2, 3}, v0, 1.0), InvalidInput);
  CHECK_THROWS_AS(propagate(sys, x0, Vec{1, 2, 3}, 1.0), InvalidInput);
  Vec overlap{0, 0, 0, 0};
  CHECK_THROWS_AS(propagate(sys, overlap, v0, 1.0), InvalidInput);

  CHECK_THROWS_AS(termination_from_name("never"), InvalidInput);
  CHECK(std::string(termination_name(Termination::BlowUp)) == "blowup");
  CHECK(termination_from_name("collision") == Termination::CollisionDetected);
}
