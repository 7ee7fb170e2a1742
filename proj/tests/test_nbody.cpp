#include <cmath>

#include "doctest.h"
#include "raymin/nbody.hpp"
#include "raymin/rng.hpp"

using namespace raymin;

namespace {

MassSystem random_system(Rng& rng, int n, int d) {
  std::vector<double> m(n);
  for (auto& mi : m) mi = 0.5 + rng.uniform();
  return MassSystem::make(m, d);
}

// Rejection-sample a configuration with pair separations >= 0.3.
Vec spread_config(Rng& rng, const MassSystem& sys, double box = 3.0) {
  for (int tries = 0; tries < 1000; ++tries) {
    Vec x(sys.nd());
    for (auto& c : x) c = rng.uniform(-box, box);
    if (sys.bodies() < 2 || min_max_separation(sys, x).first >= 0.3) return x;
  }
  throw std::runtime_error("spread_config exhausted");
}

}  // namespace

TEST_CASE("mass inner product and moment of inertia") {
  auto sys = MassSystem::make({2.0, 3.0}, 2);
  Vec x = {1, 0, 0, 1};
  Vec y = {1, 1, 1, 1};
  CHECK(mass_inner(sys, x, y) == doctest::Approx(2.0 * 1 + 3.0 * 1));
  CHECK(moment_of_inertia(sys, x) == doctest::Approx(2.0 + 3.0));
  CHECK(mass_norm(sys, x) == doctest::Approx(std::sqrt(5.0)));
  // dual norm: |p|_*^2 = sum p_i^2/m_i
  CHECK(dual_mass_norm(sys, x) == doctest::Approx(std::sqrt(1.0 / 2 + 1.0 / 3)));
}

TEST_CASE("potential energy against direct summation") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform() * 4);
    int d = (trial % 2 == 0) ? 2 : 3;
    auto sys = random_system(rng, n, d);
    Vec x = spread_config(rng, sys);

    double u_direct = 0;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        double r2 = 0;
        for (int c = 0; c < d; ++c) {
          double dd = x[a * d + c] - x[b * d + c];
          r2 += dd * dd;
        }
        u_direct += sys.masses[a] * sys.masses[b] / std::sqrt(r2);
      }
    CHECK(potential_energy(sys, x) == doctest::Approx(u_direct).epsilon(1e-13));
  }
}

TEST_CASE("potential gradient against central differences") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    auto sys = random_system(rng, 3, 2);
    Vec x = spread_config(rng, sys);
    Vec g;
    potential_gradient(sys, x, g);

    double scale = 1.0 + mass_norm(sys, x);
    double step = 1e-6 * scale;
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      double fd = (potential_energy(sys, xp) - potential_energy(sys, xm)) / (2 * step);
      CHECK(g[i] == doctest::Approx(fd).epsilon(2e-7));
    }
  }
}

TEST_CASE("potential scaling and invariance") {
  Rng rng(37);
  auto sys = random_system(rng, 4, 2);
  Vec x = spread_config(rng, sys);

  // Homogeneity of degree -1.
  double u = potential_energy(sys, x);
  Vec x2(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x2[i] = 2.5 * x[i];
  CHECK(potential_energy(sys, x2) == doctest::Approx(u / 2.5).epsilon(1e-13));

  // Translation invariance.
  Vec xt = x;
  for (int b = 0; b < sys.bodies(); ++b) {
    xt[b * 2] += 1.7;
    xt[b * 2 + 1] -= 0.4;
  }
  CHECK(potential_energy(sys, xt) == doctest::Approx(u).epsilon(1e-13));

  // Gradient force pairs cancel: sum of blocks is zero.
  Vec g;
  potential_gradient(sys, x, g);
  for (int c = 0; c < 2; ++c) {
    double s = 0;
    for (int b = 0; b < sys.bodies(); ++b) s += g[b * 2 + c];
    CHECK(std::fabs(s) < 1e-12);
  }
}

TEST_CASE("collision threshold raises") {
  auto sys = MassSystem::make({1.0, 1.0}, 2);
  Vec x = {0, 0, 0, 0};
  CHECK_THROWS_AS(potential_energy(sys, x), CollisionSingularity);
  Vec g;
  CHECK_THROWS_AS(potential_gradient(sys, x, g), CollisionSingularity);
  // Unchecked form reports the infinite marker instead.
  CHECK(std::isinf(potential_unchecked(sys, x)));

  // Just above threshold is fine.
  Vec y = {0, 0, 1e-6, 0};
  CHECK(potential_energy(sys, y) == doctest::Approx(1e6));
}

TEST_CASE("separations and shape checks") {
  auto sys = MassSystem::make({1, 1, 1}, 2);
  Vec x = {0, 0, 1, 0, 0, 2};
  auto [lo, hi] = min_max_separation(sys, x);
  CHECK(lo == doctest::Approx(1.0));
  CHECK(hi == doctest::Approx(std::sqrt(5.0)));

  Vec bad = {0, 0, 1};
  CHECK_THROWS_AS(potential_energy(sys, bad), InvalidInput);
  CHECK_THROWS_AS(MassSystem::make({1.0, -1.0}, 2), InvalidInput);
  CHECK_THROWS_AS(MassSystem::make({}, 2), InvalidInput);
}
