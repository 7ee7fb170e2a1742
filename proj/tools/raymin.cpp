// Command-line driver: scenario file in, JSON reports and columnar series out.
// Exit codes: 0 success, 2 validation, 3 convergence, 4 audit, 1 internal.

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "raymin/action.hpp"
#include "raymin/asymptotics.hpp"
#include "raymin/dynamics.hpp"
#include "raymin/jm.hpp"
#include "raymin/nbody.hpp"
#include "raymin/parallel.hpp"
#include "raymin/rng.hpp"
#include "raymin/scenario.hpp"
#include "raymin/types.hpp"
#include "raymin/weak_kam.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace raymin;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kValidation = 2;
constexpr int kConvergence = 3;
constexpr int kAudit = 4;

struct CliArgs {
  std::string scenario;
  std::string out = ".";
  int jobs = 1;
  long long seed = -1;  // < 0: use the scenario's seed
  double tol = -1;      // < 0: command default
};

void write_json_file(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

MinimizeOptions pot_from(const ScenarioBlock* b, MinimizeOptions mo = {}) {
  if (!b) return mo;
  mo.m = static_cast<int>(b->int_or("m", mo.m));
  mo.m_coarse = static_cast<int>(b->int_or("m_coarse", mo.m_coarse));
  mo.restarts = static_cast<int>(b->int_or("restarts", mo.restarts));
  mo.max_iter = static_cast<int>(b->int_or("max_iter", mo.max_iter));
  mo.max_doublings = static_cast<int>(b->int_or("max_doublings", mo.max_doublings));
  mo.refine_rel = b->num_or("refine_rel", mo.refine_rel);
  mo.t_rel_tol = b->num_or("t_rel_tol", mo.t_rel_tol);
  mo.grade_dt0 = b->num_or("grade_dt0", mo.grade_dt0);
  mo.grade_growth = b->num_or("grade_growth", mo.grade_growth);
  return mo;
}

PropagateOptions prop_from(const ScenarioBlock* b, PropagateOptions po = {}) {
  if (!b) return po;
  po.abs_tol = b->num_or("abs_tol", po.abs_tol);
  po.rel_tol = b->num_or("rel_tol", po.rel_tol);
  po.sample_dt = b->num_or("sample_dt", po.sample_dt);
  po.symplectic = b->int_or("symplectic", po.symplectic ? 1 : 0) != 0;
  po.dt_fixed = b->num_or("dt_fixed", po.dt_fixed);
  return po;
}

Vec unit_direction(const MassSystem& sys, Vec v, const char* what) {
  double n = mass_norm(sys, v);
  require(n > 0, what);
  for (double& c : v) c /= n;
  return v;
}

json shape_json(const LimitShapeFit& s) {
  json j;
  j["ok"] = s.ok;
  j["a"] = s.a;
  j["norm"] = s.norm;
  j["residual"] = s.residual;
  j["slope_stderr"] = s.slope_stderr;
  if (!s.note.empty()) j["note"] = s.note;
  return j;
}

json classify_json(const AsymptoticReport& rep) {
  json j;
  j["class"] = asymptotic_class_name(rep.cls);
  j["h0"] = rep.h0;
  j["horizon"] = rep.horizon;
  j["R_exponent"] = rep.R_exponent;
  j["R_over_t_trend"] = rep.R_over_t_trend;
  j["shape"] = shape_json(rep.shape);
  json pairs = json::array();
  for (const PairGrowth& g : rep.growth) {
    json p;
    p["a"] = g.a;
    p["b"] = g.b;
    p["exponent"] = g.exponent;
    p["trend_fraction"] = g.trend_fraction;
    p["expansive"] = g.expansive;
    pairs.push_back(p);
  }
  j["pairs"] = pairs;
  json sup;
  sup["verdict"] = rep.super.verdict;
  sup["R_over_t_growth"] = rep.super.R_over_t_growth;
  sup["r_shrink"] = rep.super.r_shrink;
  j["superhyperbolic"] = sup;
  if (!rep.note.empty()) j["note"] = rep.note;
  return j;
}

json cert_json(const GeodesicCertificate& cert) {
  json j;
  j["verdict"] = cert_verdict_name(cert.verdict);
  j["worst_defect"] = cert.worst_defect;
  j["worst_rel_defect"] = cert.worst_rel_defect;
  json wins = json::array();
  for (const CertWindow& w : cert.windows) {
    json r;
    r["a"] = w.a;
    r["b"] = w.b;
    r["action"] = w.action_value;
    r["potential"] = w.potential_value;
    r["defect"] = w.defect;
    r["tol"] = w.tol;
    r["converged"] = w.potential_converged;
    wins.push_back(r);
  }
  j["windows"] = wins;
  return j;
}

json scenario_header(const char* command, const Scenario& sc) {
  json j;
  j["command"] = command;
  j["scenario"] = fs::path(sc.path).filename().string();
  j["bodies"] = sc.system.bodies();
  j["d"] = sc.system.dim;
  j["seed"] = sc.seed;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_propagate(const Scenario& sc, const CliArgs& cli) {
  const ScenarioBlock& b = sc.root.child("propagate");
  require(sc.has_initial, "propagate: scenario has no initial block");
  double t_end = b.num("t_end");
  require(t_end > 0, "propagate: t_end must be positive");
  PropagateOptions po = prop_from(&b);

  Trajectory tr = propagate(sc.system, sc.x0, sc.v0, t_end, po);

  fs::create_directories(cli.out);
  write_trajectory((fs::path(cli.out) / "trajectory.tsv").string(), sc.system, tr);

  json j = scenario_header("propagate", sc);
  j["t_end"] = t_end;
  j["samples"] = tr.samples();
  j["termination"] = termination_name(tr.termination);
  j["energy_initial"] = energy(sc.system, sc.x0, sc.v0);
  j["energy_final"] = tr.energies.back();
  j["max_energy_drift"] = tr.max_energy_drift;
  j["min_separation"] = tr.min_separation_seen;
  j["action"] = tr.action_cum.back();
  j["jm_length"] = tr.jm_cum.back();
  write_json_file(fs::path(cli.out) / "propagate.json", j);
  return kOk;
}

int cmd_potential(const Scenario& sc, const CliArgs& cli) {
  const ScenarioBlock& b = sc.root.child("potential");
  double h = b.num_or("h", 0.0);
  require(h >= 0, "potential: h must be non-negative");
  bool audit = b.int_or("audit", 1) != 0;
  MinimizeOptions mo = pot_from(b.find("pot"));
  mo.seed = sc.seed;

  struct PairSpec {
    Vec x, y;
    double T = 0;  // 0: free time
  };
  std::vector<PairSpec> specs;
  for (const ScenarioBlock& c : b.children) {
    if (c.name != "pair") continue;
    PairSpec s;
    s.x = c.vec("x");
    s.y = c.vec("y");
    check_shape(sc.system, s.x, "potential.pair.x");
    check_shape(sc.system, s.y, "potential.pair.y");
    if (c.has("T")) {
      s.T = c.num("T");
      require(s.T > 0, "potential: pair T must be positive");
    }
    specs.push_back(std::move(s));
  }
  require(!specs.empty(), "potential: no pair blocks");

  std::vector<json> rows(specs.size());
  std::vector<char> row_converged(specs.size(), 1);
  std::vector<char> row_bound_ok(specs.size(), 1);
  parallel_for(static_cast<int>(specs.size()), cli.jobs, [&](int i) {
    const PairSpec& s = specs[static_cast<std::size_t>(i)];
    json r;
    r["x"] = s.x;
    r["y"] = s.y;
    double l = mass_dist(sc.system, s.x, s.y);
    r["dist"] = l;
    if (s.T > 0) {
      PotentialValue pv = fixed_time_potential(sc.system, s.x, s.y, s.T, mo, h);
      r["T"] = s.T;
      r["value"] = pv.value;
      r["value_raw"] = pv.value_raw;
      r["m_final"] = pv.m_final;
      r["doublings"] = pv.doublings;
      r["converged"] = pv.report.converged;
      r["iterations"] = pv.report.iterations;
      r["min_separation"] = pv.report.min_separation;
      double lb = l * l / (2 * s.T);
      r["lower_bound"] = lb;
      bool ok = pv.value_raw - h * s.T >= lb - 1e-12 * std::max(1.0, lb);
      r["lower_bound_ok"] = ok;
      row_bound_ok[static_cast<std::size_t>(i)] = ok;
      row_converged[static_cast<std::size_t>(i)] = pv.report.converged;
    } else {
      FreeTimeValue fv = free_time_potential(sc.system, h, s.x, s.y, mo);
      r["value"] = fv.value;
      r["value_raw"] = fv.value_raw;
      r["t_opt"] = fv.t_opt;
      r["evals"] = fv.evals;
      bool conv = l == 0 || fv.report.converged;
      r["converged"] = conv;
      r["iterations"] = fv.report.iterations;
      r["min_separation"] = fv.report.min_separation;
      if (fv.t_opt > 0) {
        double lb = l * l / (2 * fv.t_opt);
        r["lower_bound"] = lb;
        bool ok = fv.value_raw - h * fv.t_opt >= lb - 1e-12 * std::max(1.0, lb);
        r["lower_bound_ok"] = ok;
        row_bound_ok[static_cast<std::size_t>(i)] = ok;
      }
      if (audit && l > 0) {
        FreeTimeValue rev = free_time_potential(sc.system, h, s.y, s.x, mo);
        double gap = std::fabs(fv.value - rev.value) / std::max(1.0, std::fabs(fv.value));
        r["symmetry_gap"] = gap;
      }
      row_converged[static_cast<std::size_t>(i)] = conv;
    }
    rows[static_cast<std::size_t>(i)] = std::move(r);
  });

  json j = scenario_header("potential", sc);
  j["h"] = h;
  j["rows"] = rows;
  write_json_file(fs::path(cli.out) / "potential.json", j);

  if (std::find(row_bound_ok.begin(), row_bound_ok.end(), 0) != row_bound_ok.end()) {
    std::fprintf(stderr, "potential: kinetic lower bound violated\n");
    return kAudit;
  }
  if (std::find(row_converged.begin(), row_converged.end(), 0) != row_converged.end()) {
    std::fprintf(stderr, "potential: a row failed to converge\n");
    return kConvergence;
  }
  return kOk;
}

int cmd_minimize(const Scenario& sc, const CliArgs& cli) {
  const ScenarioBlock& b = sc.root.child("minimize");
  Vec x = b.vec("x"), y = b.vec("y");
  check_shape(sc.system, x, "minimize.x");
  check_shape(sc.system, y, "minimize.y");
  double T = b.num("T");
  require(T > 0, "minimize: T must be positive");
  double h = b.num_or("h", 0.0);
  int m = static_cast<int>(b.int_or("m", 256));
  require(m >= 2, "minimize: m must be at least 2");
  MinimizeOptions mo = pot_from(b.find("pot"));
  mo.seed = sc.seed;

  MinimizeReport rep = fixed_time_minimizer(sc.system, x, y, T, m, mo, h);

  fs::create_directories(cli.out);
  {
    std::ofstream out(fs::path(cli.out) / "path.tsv", std::ios::binary);
    if (!out) throw InvalidInput("cannot write path.tsv");
    out << "# t";
    for (int c = 0; c < sc.system.nd(); ++c) out << "\tx" << c;
    out << "\n";
    char buf[32];
    for (int k = 0; k < rep.path.node_count(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", rep.path.times[static_cast<std::size_t>(k)]);
      out << buf;
      for (int c = 0; c < sc.system.nd(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", rep.path.node(k)[c]);
        out << '\t' << buf;
      }
      out << "\n";
    }
  }

  json j = scenario_header("minimize", sc);
  j["h"] = h;
  j["T"] = T;
  j["segments"] = rep.path.segments();
  j["action_value"] = rep.action_value;
  j["gradient_norm"] = rep.gradient_norm;
  j["converged"] = rep.converged;
  j["min_separation"] = rep.min_separation;
  j["iterations"] = rep.iterations;
  j["restarts_used"] = rep.restarts_used;
  write_json_file(fs::path(cli.out) / "minimize.json", j);
  return rep.converged ? kOk : kConvergence;
}

int cmd_classify(const Scenario& sc, const CliArgs& cli) {
  const ScenarioBlock& b = sc.root.child("classify");
  require(sc.has_initial, "classify: scenario has no initial block");
  double horizon = b.num("horizon");
  require(horizon > 0, "classify: horizon must be positive");
  PropagateOptions po = prop_from(&b);
  if (po.sample_dt <= 0) po.sample_dt = horizon / 2000;

  Trajectory tr = propagate(sc.system, sc.x0, sc.v0, horizon, po);
  AsymptoticReport rep = classify(sc.system, tr);

  json j = scenario_header("classify", sc);
  j["termination"] = termination_name(tr.termination);
  j["report"] = classify_json(rep);
  write_json_file(fs::path(cli.out) / "classify.json", j);
  return kOk;
}

int cmd_ray(const Scenario& sc, const CliArgs& cli) {
  const ScenarioBlock& b = sc.root.child("ray");
  require(sc.has_initial, "ray: scenario has no initial block");
  double h = b.num_or("h", 0.0);
  require(h >= 0, "ray: h must be non-negative");

  Vec dir = b.has("direction") ? b.vec("direction") : sc.x0;
  check_shape(sc.system, dir, "ray.direction");
  dir = unit_direction(sc.system, dir,
                       "ray: direction required (collision start has no natural one)");

  BusemannOptions bo;
  bo.pot = pot_from(b.find("pot"), bo.pot);
  bo.pot.seed = sc.seed;
  bo.n_max = static_cast<int>(b.int_or("n_max", bo.n_max));
  bo.rho0 = b.num_or("rho0", bo.rho0);
  bo.cauchy_tol = b.num_or("cauchy_tol", bo.cauchy_tol);
  bo.jobs = cli.jobs;
  BusemannField field = make_busemann_field(sc.system, h, dir, sc.x0, bo);

  RayOptions ro;
  ro.r0 = b.num_or("r0", ro.r0);
  ro.steps = static_cast<int>(b.int_or("steps", ro.steps));
  ro.horizon = b.num_or("horizon", ro.horizon);
  ro.sample_dt = b.num_or("sample_dt", ro.sample_dt);
  ro.n_fixed = static_cast<int>(b.int_or("n", ro.n_fixed));
  ro.seed = sc.seed;
  ro.jobs = cli.jobs;

  CalibratingRay ray = generate_calibrating_ray(field, sc.x0, ro);

  json j = scenario_header("ray", sc);
  j["h"] = h;
  j["complete"] = ray.complete;
  if (!ray.failure.empty()) j["failure"] = ray.failure;
  j["n_used"] = ray.n_used;
  j["energy"] = ray.energy;
  j["t_offset"] = ray.t_offset;
  j["x_launch"] = ray.x_launch;
  j["v0"] = ray.v0;
  j["chain_duration"] = ray.chain_duration;
  j["junction_times"] = ray.junction_times;
  j["junction_defects"] = ray.junction_defects;
  j["max_junction_defect"] = ray.max_junction_defect;
  json steps = json::array();
  for (const CalibrationStep& s : ray.steps) {
    json r;
    r["radius"] = s.radius;
    r["defect"] = s.defect;
    r["u_x"] = s.u_x;
    r["u_y"] = s.u_y;
    r["phi"] = s.phi;
    r["n_used"] = s.n_used;
    steps.push_back(r);
  }
  j["steps"] = steps;

  if (!ray.complete) {
    write_json_file(fs::path(cli.out) / "ray.json", j);
    std::fprintf(stderr, "ray: construction incomplete: %s\n", ray.failure.c_str());
    return kConvergence;
  }

  fs::create_directories(cli.out);
  write_trajectory((fs::path(cli.out) / "trajectory.tsv").string(), sc.system, ray.trajectory);

  CertifyOptions co;
  co.pot = pot_from(b.find("cert"), co.pot);
  co.pot.m = static_cast<int>(b.int_or("cert_m", 128));
  co.pot.restarts = 1;
  co.pot.max_doublings = 2;
  co.max_windows = static_cast<int>(b.int_or("cert_windows", 5));
  co.jobs = cli.jobs;
  GeodesicCertificate cert = certify_geodesic_ray(sc.system, h, ray.trajectory, co);
  AsymptoticReport rep = classify(sc.system, ray.trajectory);

  j["certificate"] = cert_json(cert);
  j["classification"] = classify_json(rep);
  write_json_file(fs::path(cli.out) / "ray.json", j);

  if (cert.verdict != CertVerdict::Certified) {
    std::fprintf(stderr, "ray: certificate verdict %s\n", cert_verdict_name(cert.verdict));
    return kAudit;
  }
  return kOk;
}

int cmd_busemann(const Scenario& sc, const CliArgs& cli) {
  const ScenarioBlock& b = sc.root.child("busemann");
  double h = b.num_or("h", 0.0);
  require(h >= 0, "busemann: h must be non-negative");
  Vec dir = b.vec("direction");
  check_shape(sc.system, dir, "busemann.direction");
  Vec base = b.has("base") ? b.vec("base")
                           : (sc.has_initial ? sc.x0 : Vec(sc.x0.size(), 0.0));
  if (base.empty()) base.assign(static_cast<std::size_t>(sc.system.nd()), 0.0);
  check_shape(sc.system, base, "busemann.base");

  BusemannOptions bo;
  bo.pot = pot_from(b.find("pot"), bo.pot);
  bo.pot.seed = sc.seed;
  bo.n_max = static_cast<int>(b.int_or("n_max", bo.n_max));
  bo.rho0 = b.num_or("rho0", bo.rho0);
  bo.cauchy_tol = b.num_or("cauchy_tol", bo.cauchy_tol);
  bo.jobs = cli.jobs;
  BusemannField field = make_busemann_field(sc.system, h, dir, base, bo);

  std::vector<Vec> points;
  for (const ScenarioBlock& c : b.children) {
    if (c.name != "point") continue;
    Vec x = c.vec("x");
    check_shape(sc.system, x, "busemann.point.x");
    points.push_back(std::move(x));
  }

  std::vector<json> rows(points.size());
  std::vector<char> ok(points.size(), 1);
  parallel_for(static_cast<int>(points.size()), cli.jobs, [&](int i) {
    json r;
    r["x"] = points[static_cast<std::size_t>(i)];
    try {
      BusemannValue bv = busemann_limit(field, points[static_cast<std::size_t>(i)]);
      r["value"] = bv.value;
      r["n_used"] = bv.n_used;
      r["increments"] = bv.increments;
      r["converged"] = bv.converged;
    } catch (const NonConvergent& e) {
      r["converged"] = false;
      r["increments"] = e.increments;
      r["error"] = e.what();
      ok[static_cast<std::size_t>(i)] = 0;
    }
    rows[static_cast<std::size_t>(i)] = std::move(r);
  });

  json j = scenario_header("busemann", sc);
  j["h"] = h;
  j["base"] = base;
  j["direction"] = field.direction;
  j["radii"] = field.radii;
  j["points"] = rows;

  if (const ScenarioBlock* g = b.find("grid")) {
    SliceGrid grid;
    grid.origin = g->vec("origin");
    check_shape(sc.system, grid.origin, "busemann.grid.origin");
    grid.e1 = g->vec("e1");
    grid.e2 = g->vec("e2");
    check_shape(sc.system, grid.e1, "busemann.grid.e1");
    check_shape(sc.system, grid.e2, "busemann.grid.e2");
    mass_orthonormalize(sc.system, grid.e1, grid.e2);
    grid.n1 = static_cast<int>(g->int_or("n1", grid.n1));
    grid.n2 = static_cast<int>(g->int_or("n2", grid.n2));
    grid.s1 = g->num_or("s1", grid.s1);
    grid.s2 = g->num_or("s2", grid.s2);
    int n = static_cast<int>(g->int_or("n", 3));
    double tol_hj = cli.tol > 0 ? cli.tol : g->num_or("tol", 0.01 * (1 + h));
    double mask_sep = g->num_or("mask_sep", 0.02);

    Vec u = busemann_grid_values(field, grid, n, cli.jobs);
    HjAudit audit = hj_subsolution_audit(sc.system, h, grid, u, tol_hj, mask_sep);

    json ga;
    ga["n"] = n;
    ga["n1"] = grid.n1;
    ga["n2"] = grid.n2;
    ga["tol"] = audit.tol;
    ga["mask_sep"] = mask_sep;
    ga["interior"] = audit.interior;
    ga["unmasked"] = audit.unmasked;
    ga["passing"] = audit.passing;
    ga["pass_fraction"] = audit.pass_fraction;
    ga["worst"] = audit.worst;
    ga["u"] = u;
    ga["residual"] = audit.residual;
    j["grid"] = ga;
  }

  write_json_file(fs::path(cli.out) / "busemann.json", j);

  if (!points.empty() && std::find(ok.begin(), ok.end(), 1) == ok.end()) {
    std::fprintf(stderr, "busemann: no point evaluation converged\n");
    return kConvergence;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_verify(const Scenario& sc, const CliArgs& cli) {
  static const ScenarioBlock kEmpty{};
  const ScenarioBlock* vb_ptr = sc.root.find("verify");
  const ScenarioBlock& vb = vb_ptr ? *vb_ptr : kEmpty;

  const MassSystem& sys = sc.system;
  int nd = sys.nd();
  int triples_n = static_cast<int>(vb.int_or("triples", 6));
  Vec h_list = vb.has("h_list") ? vb.vec("h_list") : Vec{0.0, 0.5};
  int bound_fit = static_cast<int>(vb.int_or("bound_fit", 18));
  int bound_holdout = static_cast<int>(vb.int_or("bound_holdout", 8));
  int marchal_pairs = static_cast<int>(vb.int_or("marchal_pairs", 5));
  int closed_count = static_cast<int>(vb.int_or("closedness_count", 2));
  double closed_h_limit = vb.num_or("closedness_h_limit", 0.0);
  double closed_horizon = vb.num_or("closedness_horizon", 30.0);
  double jm_horizon = vb.num_or("jm_horizon", 12.0);
  double tol = cli.tol > 0 ? cli.tol : vb.num_or("tol", 1e-5);
  for (double hh : h_list) require(hh >= 0, "verify: h_list entries must be non-negative");
  require(sc.has_initial, "verify: scenario has no initial block");

  MinimizeOptions mo = pot_from(vb.find("pot"));
  mo.seed = sc.seed;
  Rng rng(sc.seed);

  auto spread_config = [&](double box) {
    for (int tries = 0; tries < 2000; ++tries) {
      Vec x(static_cast<std::size_t>(nd));
      for (double& c : x) c = rng.uniform(-box, box);
      if (min_max_separation(sys, x).first >= 0.4) return x;
    }
    throw ConvergenceFailure("verify: failed to sample a spread configuration");
  };

  json suites = json::array();
  bool all_pass = true;
  auto add_suite = [&](const char* name, bool pass, json stats) {
    json j;
    j["suite"] = name;
    j["passed"] = pass;
    j.update(stats);
    suites.push_back(std::move(j));
    if (!pass) {
      all_pass = false;
      std::fprintf(stderr, "verify: suite '%s' failed\n", name);
    }
  };

  // Distance axioms of phi_h, plus the structural kinetic lower bound.
  {
    json per_h = json::array();
    bool pass = true;
    for (double hh : h_list) {
      std::vector<std::array<Vec, 3>> tris;
      for (int i = 0; i < triples_n; ++i)
        tris.push_back({spread_config(2.0), spread_config(2.0), spread_config(2.0)});
      TriangleAudit ta = triangle_inequality_audit(sys, hh, tris, mo, cli.jobs);
      double ident = free_time_potential(sys, hh, tris[0][0], tris[0][0], mo).value;
      bool ok = ta.worst_slack_rel <= tol && ta.worst_symmetry_gap <= tol &&
                ta.lower_bound_violations == 0 && ident == 0.0;
      json r;
      r["h"] = hh;
      r["triples"] = ta.triples;
      r["worst_slack_rel"] = ta.worst_slack_rel;
      r["worst_symmetry_gap"] = ta.worst_symmetry_gap;
      r["lower_bound_violations"] = ta.lower_bound_violations;
      r["identity_value"] = ident;
      r["ok"] = ok;
      per_h.push_back(r);
      pass = pass && ok;
    }
    json s;
    s["tol"] = tol;
    s["per_h"] = per_h;
    add_suite("distance_axioms", pass, s);
  }

  // Fitted action bounds and the derived free-energy envelope.
  {
    double h_max = *std::max_element(h_list.begin(), h_list.end());
    if (h_max <= 0) h_max = 0.5;
    std::vector<BoundSample> samples;
    for (int i = 0; i < bound_fit; ++i) {
      BoundSample s;
      s.x = spread_config(2.0);
      s.y = spread_config(2.0);
      s.t = mass_dist(sys, s.x, s.y) * std::pow(2.0, rng.uniform(-3.0, 2.0));
      samples.push_back(std::move(s));
    }
    BoundConstants bc = fit_bound_constants(sys, h_max, samples, mo, cli.jobs);

    struct Holdout {
      Vec x, y;
      double h;
    };
    std::vector<Holdout> hold;
    for (int i = 0; i < bound_holdout; ++i)
      hold.push_back({spread_config(2.0), spread_config(2.0), rng.uniform(0.0, h_max)});
    std::vector<char> viol(hold.size(), 0);
    parallel_for(static_cast<int>(hold.size()), cli.jobs, [&](int i) {
      const Holdout& hd = hold[static_cast<std::size_t>(i)];
      double phi = free_time_potential(sys, hd.h, hd.x, hd.y, mo).value;
      double env = bc.mu(mass_dist(sys, hd.x, hd.y));
      if (phi > env * (1 + 1e-9) + 1e-12) viol[static_cast<std::size_t>(i)] = 1;
    });
    int violations = static_cast<int>(std::count(viol.begin(), viol.end(), 1));
    bool pass = std::isfinite(bc.c1) && std::isfinite(bc.c2) && bc.c1 > 0 && bc.c2 > 0 &&
                bc.worst_fit_slack <= 1e-9 && violations == 0;
    json s;
    json cj;
    cj["c1"] = bc.c1;
    cj["c2"] = bc.c2;
    cj["alpha"] = bc.alpha;
    cj["beta"] = bc.beta;
    cj["energy_bound"] = bc.energy_bound;
    s["constants"] = cj;
    s["fit_samples"] = bc.n_samples;
    s["worst_fit_slack"] = bc.worst_fit_slack;
    s["holdout"] = static_cast<int>(hold.size());
    s["holdout_violations"] = violations;
    add_suite("action_bounds", pass, s);
  }

  // Converged minimizers stay clear of collisions in the interior.
  {
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < marchal_pairs; ++i)
      pairs.emplace_back(spread_config(2.0), spread_config(2.0));
    std::vector<json> rows(pairs.size());
    std::vector<char> fine(pairs.size(), 1);
    parallel_for(static_cast<int>(pairs.size()), cli.jobs, [&](int i) {
      const auto& [x, y] = pairs[static_cast<std::size_t>(i)];
      double hh = (i % 2 == 0) ? 0.0 : 0.5;
      FreeTimeValue fv = free_time_potential(sys, hh, x, y, mo);
      double scale = std::min(min_max_separation(sys, x).first,
                              min_max_separation(sys, y).first);
      bool ok = !fv.report.converged || fv.report.min_separation >= 1e-3 * scale;
      json r;
      r["h"] = hh;
      r["converged"] = fv.report.converged;
      r["min_separation"] = fv.report.min_separation;
      r["endpoint_scale"] = scale;
      r["ok"] = ok;
      rows[static_cast<std::size_t>(i)] = std::move(r);
      if (!ok) fine[static_cast<std::size_t>(i)] = 0;
    });
    bool pass = std::find(fine.begin(), fine.end(), 0) == fine.end();
    json s;
    s["pairs"] = rows;
    add_suite("interior_separation", pass, s);
  }

  // JM length vs action: equality on solution arcs, inequality off them.
  {
    Vec radial = unit_direction(sys, sc.x0, "verify: initial.x must be collision-free");
    bool pass = true;
    json rows = json::array();
    for (double hh : {0.0, 1.0}) {
      double speed = std::sqrt(2.0 * (hh + potential_energy(sys, sc.x0)));
      Vec v0 = radial;
      for (double& c : v0) c *= speed;
      PropagateOptions po;
      po.sample_dt = 0.02;
      Trajectory tr = propagate(sys, sc.x0, v0, jm_horizon, po);
      DiscretePath p;
      p.nd = nd;
      p.times = tr.times;
      p.nodes = tr.xs;
      double act = discrete_action(sys, p, hh);
      double len = jm_length(sys, hh, p);
      double rel = std::fabs(len - act) / std::max(1.0, std::fabs(act));
      bool ok_sol = rel <= 1e-3;

      DiscretePath q = p;
      Rng prng(sc.seed + 17);
      for (int k = 1; k + 1 < q.node_count(); ++k)
        for (int c = 0; c < nd; ++c) q.node(k)[c] += 0.05 * prng.normal();
      double act_q = discrete_action(sys, q, hh);
      double len_q = jm_length(sys, hh, q);
      bool ok_ineq = len_q <= act_q + 1e-12 * std::max(1.0, std::fabs(act_q));

      json r;
      r["h"] = hh;
      r["action"] = act;
      r["jm_length"] = len;
      r["rel_gap"] = rel;
      r["solution_ok"] = ok_sol;
      r["perturbed_inequality_ok"] = ok_ineq;
      rows.push_back(r);
      pass = pass && ok_sol && ok_ineq;
    }
    json s;
    s["rows"] = rows;
    add_suite("jm_equivalence", pass, s);
  }

  // Closedness of the geodesic-ray property along an energy sequence.
  {
    Vec radial = unit_direction(sys, sc.x0, "verify: initial.x must be collision-free");
    double u0 = potential_energy(sys, sc.x0);
    auto datum = [&](double hh) {
      Vec v = radial;
      double speed = std::sqrt(2.0 * (hh + u0));
      for (double& c : v) c *= speed;
      return std::make_pair(sc.x0, v);
    };
    std::vector<std::pair<Vec, Vec>> members;
    for (int k = 1; k <= closed_count; ++k) members.push_back(datum(closed_h_limit + 1.0 / k));

    ClosednessOptions co;
    co.horizon = closed_horizon;
    co.cert.pot = mo;
    co.cert.max_windows = 4;
    co.jobs = cli.jobs;
    ClosednessReport rep = closedness_experiment(sys, members, datum(closed_h_limit), co);

    json rows = json::array();
    for (const ClosednessMember& m : rep.members) {
      json r;
      r["h"] = m.h;
      r["verdict"] = cert_verdict_name(m.cert.verdict);
      r["worst_defect"] = m.worst_defect;
      rows.push_back(r);
    }
    json s;
    s["members"] = rows;
    s["member_defect_sup"] = rep.member_defect_sup;
    json lim;
    lim["h"] = rep.limit.h;
    lim["verdict"] = cert_verdict_name(rep.limit.cert.verdict);
    lim["worst_defect"] = rep.limit.worst_defect;
    s["limit"] = lim;
    add_suite("closedness", rep.closed, s);
  }

  json j = scenario_header("verify", sc);
  j["tol"] = tol;
  j["suites"] = suites;
  j["passed"] = all_pass;
  write_json_file(fs::path(cli.out) / "verify.json", j);
  return all_pass ? kOk : kAudit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action-minimizing trajectory toolkit for the Newtonian n-body problem"};
  app.require_subcommand(1);

  CliArgs a;
  const char* names[] = {"propagate", "potential", "minimize", "classify",
                         "ray",       "busemann",  "verify"};
  const char* descs[] = {
      "integrate the flow from the scenario's initial data",
      "tabulate action potentials for the scenario's endpoint pairs",
      "fixed-endpoint, fixed-time action minimizer",
      "propagate and classify the asymptotic behavior",
      "build a calibrating ray, certify and classify it",
      "evaluate the horizon-limit potential, optionally audit a slice",
      "consolidated audit: distance axioms, bounds, separation, JM, closedness",
  };
  for (int i = 0; i < 7; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descs[i]);
    sub->add_option("--scenario", a.scenario, "scenario file")->required();
    sub->add_option("--out", a.out, "output directory");
    sub->add_option("--jobs", a.jobs, "worker cap")->check(CLI::Range(1, 256));
    sub->add_option("--seed", a.seed, "override the scenario seed")
        ->check(CLI::Range(0ll, LLONG_MAX));
    sub->add_option("--tol", a.tol, "override the command's audit tolerance")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    Scenario sc = load_scenario(a.scenario);
    if (a.seed >= 0) sc.seed = static_cast<std::uint64_t>(a.seed);

    if (cmd == "propagate") return cmd_propagate(sc, a);
    if (cmd == "potential") return cmd_potential(sc, a);
    if (cmd == "minimize") return cmd_minimize(sc, a);
    if (cmd == "classify") return cmd_classify(sc, a);
    if (cmd == "ray") return cmd_ray(sc, a);
    if (cmd == "busemann") return cmd_busemann(sc, a);
    if (cmd == "verify") return cmd_verify(sc, a);
    std::fprintf(stderr, "unknown command '%s'\n", cmd.c_str());
    return kValidation;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kValidation;
  } catch (const CalibrationFailure& e) {
    std::fprintf(stderr, "convergence failure: %s\n", e.what());
    return kConvergence;
  } catch (const ConvergenceFailure& e) {
    std::fprintf(stderr, "convergence failure: %s\n", e.what());
    return kConvergence;
  } catch (const CollisionSingularity& e) {
    std::fprintf(stderr, "collision during computation: %s\n", e.what());
    return kConvergence;
  } catch (const BracketError& e) {
    std::fprintf(stderr, "convergence failure: %s\n", e.what());
    return kConvergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
}
