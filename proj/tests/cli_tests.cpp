// End-to-end checks of the command-line driver against the bundled
// scenarios: exit codes, output shapes, determinism. Requires RAYMIN_BIN and
// RAYMIN_SCENARIOS in the environment (set by the build).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "raymin/dynamics.hpp"
#include "raymin/nbody.hpp"
#include "raymin/scenario.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace raymin;

namespace {

std::string bin_path() {
  const char* p = std::getenv("RAYMIN_BIN");
  REQUIRE_MESSAGE(p != nullptr, "RAYMIN_BIN not set");
  return p;
}

std::string scenario_dir() {
  const char* p = std::getenv("RAYMIN_SCENARIOS");
  REQUIRE_MESSAGE(p != nullptr, "RAYMIN_SCENARIOS not set");
  return p;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("raymin_cli_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Runs the driver, returns the exit code; stdout/stderr land in files under
// `dir` for the assertions that want them.
int run_cli(const std::string& args, const fs::path& dir) {
  std::string cmd = bin_path() + " " + args + " > " + (dir / "stdout.txt").string() +
                    " 2> " + (dir / "stderr.txt").string();
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: " << p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json slurp_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string scn(const char* name) { return (fs::path(scenario_dir()) / name).string(); }

}  // namespace

TEST_CASE("propagate: circular scenario, energy matches the energy operation") {
  fs::path dir = fresh_dir("prop");
  int rc = run_cli("propagate --scenario " + scn("two_body_circular.scn") + " --out " +
                       (dir / "out").string(),
                   dir);
  CHECK(rc == 0);

  json j = slurp_json(dir / "out" / "propagate.json");
  CHECK(j["termination"] == "horizon");
  CHECK(j["samples"].get<int>() > 100);

  // The emitted initial energy must equal the energy operation's output
  // exactly, computed here from the same scenario.
  Scenario sc = load_scenario(scn("two_body_circular.scn"));
  double want = energy(sc.system, sc.x0, sc.v0);
  CHECK(j["energy_initial"].get<double>() == want);
  CHECK(fs::exists(dir / "out" / "trajectory.tsv"));
}

TEST_CASE("propagate: identical runs produce byte-identical outputs") {
  fs::path dir = fresh_dir("det");
  std::string s = scn("two_body_circular.scn");
  CHECK(run_cli("propagate --scenario " + s + " --out " + (dir / "a").string(), dir) == 0);
  CHECK(run_cli("propagate --scenario " + s + " --out " + (dir / "b").string(), dir) == 0);
  CHECK(slurp(dir / "a" / "propagate.json") == slurp(dir / "b" / "propagate.json"));
  CHECK(slurp(dir / "a" / "trajectory.tsv") == slurp(dir / "b" / "trajectory.tsv"));
}

TEST_CASE("validation failures exit 2 before writing anything") {
  fs::path dir = fresh_dir("bad");

  SUBCASE("malformed mass") {
    fs::path bad = dir / "bad_mass.scn";
    std::ofstream(bad) << "system {\n  d = 2\n  masses = 1 -1\n}\n";
    int rc = run_cli("propagate --scenario " + bad.string() + " --out " +
                         (dir / "out").string(),
                     dir);
    CHECK(rc == 2);
    CHECK(slurp(dir / "stderr.txt").find("masses") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out" / "propagate.json"));
  }

  SUBCASE("missing scenario file") {
    int rc = run_cli("classify --scenario " + (dir / "nope.scn").string() + " --out " +
                         (dir / "out").string(),
                     dir);
    CHECK(rc == 2);
  }

  SUBCASE("missing required block") {
    fs::path s = dir / "noblock.scn";
    std::ofstream(s) << "system {\n  masses = 1 1\n}\n";
    int rc = run_cli("classify --scenario " + s.string() + " --out " + (dir / "out").string(),
                     dir);
    CHECK(rc == 2);
    CHECK(slurp(dir / "stderr.txt").find("classify") != std::string::npos);
  }

  SUBCASE("bad flag usage") {
    int rc = run_cli("propagate --no-such-flag", dir);
    CHECK(rc == 2);
  }
}

TEST_CASE("classify: bundled scenarios land in their analytic classes") {
  struct Case {
    const char* file;
    const char* cls;
  } cases[] = {
      {"two_body_parabolic.scn", "parabolic"},
      {"two_body_hyperbolic.scn", "hyperbolic"},
      {"two_body_circular.scn", "bounded"},
  };
  for (const Case& c : cases) {
    CAPTURE(c.file);
    fs::path dir = fresh_dir(std::string("cls_") + c.cls);
    int rc = run_cli("classify --scenario " + scn(c.file) + " --out " + (dir / "out").string(),
                     dir);
    CHECK(rc == 0);
    json j = slurp_json(dir / "out" / "classify.json");
    CHECK(j["report"]["class"] == c.cls);
  }
}

TEST_CASE("potential: rows carry values, audits, and the exact zero diagonal") {
  fs::path dir = fresh_dir("pot");
  int rc = run_cli("potential --scenario " + scn("two_body_circular.scn") + " --out " +
                       (dir / "out").string() + " --jobs 2",
                   dir);
  CHECK(rc == 0);
  json j = slurp_json(dir / "out" / "potential.json");
  REQUIRE(j["rows"].size() == 3);
  for (const auto& r : j["rows"]) {
    CHECK(r["converged"].get<bool>());
    if (r.contains("lower_bound_ok")) CHECK(r["lower_bound_ok"].get<bool>());
    if (r.contains("symmetry_gap")) CHECK(r["symmetry_gap"].get<double>() <= 1e-6);
  }
  // Third pair is coincident: exactly zero.
  CHECK(j["rows"][2]["value"].get<double>() == 0.0);
  CHECK(j["rows"][1]["T"].get<double>() == 2.0);
}

TEST_CASE("potential: --jobs does not change the bytes") {
  fs::path dir = fresh_dir("potjobs");
  std::string s = scn("two_body_circular.scn");
  CHECK(run_cli("potential --scenario " + s + " --out " + (dir / "a").string() + " --jobs 1",
                dir) == 0);
  CHECK(run_cli("potential --scenario " + s + " --out " + (dir / "b").string() + " --jobs 4",
                dir) == 0);
  CHECK(slurp(dir / "a" / "potential.json") == slurp(dir / "b" / "potential.json"));
}

TEST_CASE("minimize: writes the path and its report") {
  fs::path dir = fresh_dir("min");
  int rc = run_cli("minimize --scenario " + scn("two_body_circular.scn") + " --out " +
                       (dir / "out").string(),
                   dir);
  CHECK(rc == 0);
  json j = slurp_json(dir / "out" / "minimize.json");
  CHECK(j["converged"].get<bool>());
  CHECK(j["min_separation"].get<double>() > 0.1);
  std::string path_file = slurp(dir / "out" / "path.tsv");
  CHECK(path_file.find("# t") == 0);
}

TEST_CASE("ray: ejection scenario leaves the collision and certifies") {
  fs::path dir = fresh_dir("ray");
  int rc = run_cli("ray --scenario " + scn("ejection.scn") + " --out " +
                       (dir / "out").string() + " --jobs 2",
                   dir);
  CHECK(rc == 0);
  json j = slurp_json(dir / "out" / "ray.json");
  CHECK(j["complete"].get<bool>());
  CHECK(j["t_offset"].get<double>() > 0.0);
  CHECK(std::fabs(j["energy"].get<double>()) <= 1e-9);
  CHECK(j["certificate"]["verdict"] == "certified");
  CHECK(fs::exists(dir / "out" / "trajectory.tsv"));
}

TEST_CASE("busemann: hyperbolic field evaluates and reports increments") {
  fs::path dir = fresh_dir("bus");
  int rc = run_cli("busemann --scenario " + scn("two_body_hyperbolic.scn") + " --out " +
                       (dir / "out").string() + " --jobs 2",
                   dir);
  CHECK(rc == 0);
  json j = slurp_json(dir / "out" / "busemann.json");
  REQUIRE(j["points"].size() == 2);
  for (const auto& r : j["points"]) {
    CHECK(r["converged"].get<bool>());
    CHECK(r["increments"].size() >= 1);
  }
}

TEST_CASE("verify: audit passes, and an impossible tolerance fails with code 4") {
  fs::path dir = fresh_dir("verify");
  std::string s = scn("verify_three_body.scn");
  int rc = run_cli("verify --scenario " + s + " --out " + (dir / "ok").string() + " --jobs 4",
                   dir);
  CHECK(rc == 0);
  json j = slurp_json(dir / "ok" / "verify.json");
  CHECK(j["passed"].get<bool>());
  REQUIRE(j["suites"].size() == 5);
  for (const auto& su : j["suites"]) CHECK(su["passed"].get<bool>());

  rc = run_cli("verify --scenario " + s + " --out " + (dir / "fail").string() +
                   " --jobs 4 --tol 1e-18",
               dir);
  CHECK(rc == 4);
  std::string err = slurp(dir / "stderr.txt");
  CHECK(err.find("suite") != std::string::npos);
  // The report is still written: the audit ran, its verdict is negative.
  json jf = slurp_json(dir / "fail" / "verify.json");
  CHECK_FALSE(jf["passed"].get<bool>());
}
