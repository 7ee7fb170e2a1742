#include <string>

#include "doctest.h"
#include "raymin/scenario.hpp"

using namespace raymin;

namespace {

const char* kSample = R"(# two bodies on a circle
seed = 42

system {
  d = 2
  masses = 1 1
}

initial {
  x = 0.5 0 -0.5 0
  v = 0 0.70710678118654752 0 -0.70710678118654752
}

propagate {
  t_end = 10      # trailing comment
  sample_dt = 0.1
}

potential {
  h = 0.5
  pair {
    x = 1 0 -1 0
    y = 2 0 -2 0
  }
  pair {
    x = 1 0 -1 0
    y = 0 1 0 -1
    T = 2.5
  }
}
)";

}  // namespace

TEST_CASE("scenario parse: blocks, values, initial data, seed") {
  Scenario sc = parse_scenario(kSample, "sample.scn");

  CHECK(sc.system.bodies() == 2);
  CHECK(sc.system.dim == 2);
  CHECK(sc.seed == 42);
  REQUIRE(sc.has_initial);
  CHECK(sc.x0 == Vec{0.5, 0.0, -0.5, 0.0});
  CHECK(sc.v0[1] == doctest::Approx(0.7071067811865475).epsilon(1e-15));

  const ScenarioBlock& prop = sc.root.child("propagate");
  CHECK(prop.num("t_end") == 10.0);
  CHECK(prop.num_or("absent", -1.0) == -1.0);
  CHECK(prop.int_or("absent", 7) == 7);

  const ScenarioBlock& pot = sc.root.child("potential");
  CHECK(pot.num("h") == 0.5);
  int pairs = 0;
  for (const ScenarioBlock& c : pot.children)
    if (c.name == "pair") ++pairs;
  CHECK(pairs == 2);
  CHECK(pot.children[1].num("T") == 2.5);
  CHECK(pot.children[0].vec("y") == Vec{2.0, 0.0, -2.0, 0.0});
  CHECK(pot.find("nope") == nullptr);
}

TEST_CASE("scenario parse: velocity defaults to rest") {
  std::string text = "system {\n masses = 1 2 3\n d = 2\n}\ninitial {\n x = 1 0 -1 0 0 1\n}\n";
  Scenario sc = parse_scenario(text, "t.scn");
  CHECK(sc.system.bodies() == 3);
  REQUIRE(sc.has_initial);
  CHECK(sc.v0 == Vec(6, 0.0));
}

TEST_CASE("scenario parse: diagnostics carry the file and line") {
  auto expect_throw = [](const std::string& text, const char* needle) {
    try {
      parse_scenario(text, "bad.scn");
      FAIL_CHECK("expected InvalidInput for: " << needle);
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  expect_throw("system {\n masses = 1 1\n", "unclosed block");
  expect_throw("}\n", "bad.scn:1");
  expect_throw("stray token\n", "expected 'key = value'");
  expect_throw("system {\n masses = 1 1\n}\nx { = 1\n", "bad.scn:4");

  // Validation failures name the offending block or key.
  expect_throw("seed = 1\n", "missing block 'system'");
  expect_throw("system {\n masses = 1 -1\n}\n", "masses must be positive");
  expect_throw("system {\n masses = 1 1\n d = 9\n}\n", "d must be");
  expect_throw("system {\n masses = one 1\n}\n", "not a finite number");
  expect_throw("system {\n masses = 1 1\n}\nseed = -4\n", "non-negative");
  expect_throw("system {\n masses = 1 1\n}\ninitial {\n x = 1 2 3\n}\n", "initial.x");
  expect_throw("system {\n masses = 1 1\n}\nseed = 0.5\n", "not an integer");
}

TEST_CASE("scenario parse: missing keys name their block") {
  Scenario sc = parse_scenario("system {\n masses = 1 1\n}\n", "t.scn");
  try {
    sc.root.child("system").num("h");
    FAIL_CHECK("expected InvalidInput");
  } catch (const InvalidInput& e) {
    std::string msg = e.what();
    CHECK(msg.find("'system'") != std::string::npos);
    CHECK(msg.find("'h'") != std::string::npos);
  }
}
