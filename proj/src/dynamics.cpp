#include "raymin/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace raymin {

namespace {

// State layout for the augmented flow: [x (nd), v (nd), action, jm_length].
// The two quadrature components ride along in the error control; they are as
// smooth as the flow itself away from collisions.

struct RhsResult {
  double u = 0;
  double min_sep = 0;
};

class NbodyRhs {
 public:
  NbodyRhs(const MassSystem& sys, double h0)
      : sys_(sys), h0_(h0), nd_(sys.nd()), g_(static_cast<std::size_t>(sys.nd())) {}

  RhsResult operator()(const double* y, double* dy) {
    const double* v = y + nd_;
    RhsResult r;
    std::fill(g_.begin(), g_.end(), 0.0);
    r.min_sep = potential_and_gradient(sys_, y, &r.u, g_.data());
    double kin2 = 0;
    for (int c = 0; c < nd_; ++c) {
      dy[c] = v[c];
      dy[nd_ + c] = g_[c] / sys_.coord_mass[static_cast<std::size_t>(c)];
      kin2 += sys_.coord_mass[static_cast<std::size_t>(c)] * v[c] * v[c];
    }
    dy[2 * nd_] = 0.5 * kin2 + r.u;
    double rad2 = 2 * (h0_ + r.u);
    dy[2 * nd_ + 1] = (rad2 > 0 ? std::sqrt(rad2) : 0.0) * std::sqrt(kin2);
    return r;
  }

 private:
  const MassSystem& sys_;
  double h0_;
  int nd_;
  Vec g_;
};

// Dormand-Prince 5(4) tableau. b equals the last stage row, so the final
// stage evaluation doubles as the first stage of the next step.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784,
                 A76 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920,
                 E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40;
constexpr double D1 = -12715105075.0 / 11282082432.0, D3 = 87487479700.0 / 32700410799.0,
                 D4 = -10690763975.0 / 1880347072.0, D5 = 701980252875.0 / 199316789632.0,
                 D6 = -1453857185.0 / 822651844.0, D7 = 69997945.0 / 29380423.0;

double kinetic2(const MassSystem& sys, const double* v) {
  double s = 0;
  for (int c = 0; c < sys.nd(); ++c) s += sys.coord_mass[static_cast<std::size_t>(c)] * v[c] * v[c];
  return s;
}

double max_abs_coord(const double* x, int nd) {
  double m = 0;
  for (int c = 0; c < nd; ++c) m = std::max(m, std::fabs(x[c]));
  return m;
}

double min_sep_at(const MassSystem& sys, const double* x) {
  double u;
  return potential_and_gradient(sys, x, &u, nullptr);
}

class Recorder {
 public:
  Recorder(const MassSystem& sys, Trajectory& tr) : sys_(sys), tr_(tr) {}

  void emit(double t, const double* y) {
    int nd = sys_.nd();
    if (!tr_.times.empty() && t <= tr_.times.back() + 1e-15 * std::max(1.0, std::fabs(t))) return;
    tr_.times.push_back(t);
    tr_.xs.insert(tr_.xs.end(), y, y + nd);
    tr_.vs.insert(tr_.vs.end(), y + nd, y + 2 * nd);
    double u;
    potential_and_gradient(sys_, y, &u, nullptr);
    tr_.energies.push_back(0.5 * kinetic2(sys_, y + nd) - u);
    tr_.action_cum.push_back(y[2 * nd]);
    tr_.jm_cum.push_back(y[2 * nd + 1]);
  }

 private:
  const MassSystem& sys_;
  Trajectory& tr_;
};

Trajectory propagate_adaptive(const MassSystem& sys, const Vec& y0_in, double h0, double t_end,
                              const PropagateOptions& opts) {
  const int nd = sys.nd();
  const int S = 2 * nd + 2;
  NbodyRhs rhs(sys, h0);

  Trajectory tr;
  tr.nd = nd;
  tr.h0 = h0;
  Recorder rec(sys, tr);

  Vec y = y0_in, y1(S), ytmp(S);
  Vec k1(S), k2(S), k3(S), k4(S), k5(S), k6(S), k7(S);
  Vec rc1(S), rc2(S), rc3(S), rc4(S), rc5(S), dense_tmp(S);

  RhsResult r1 = rhs(y.data(), k1.data());
  double rstop = opts.collision_factor * r1.min_sep;
  if (!std::isfinite(rstop)) rstop = 0;
  tr.min_separation_seen = r1.min_sep;
  rec.emit(0.0, y.data());

  const double atol = opts.abs_tol, rtol = opts.rel_tol;
  auto scaled_rms = [&](const Vec& err, const Vec& a, const Vec& b) {
    double s = 0;
    for (int i = 0; i < S; ++i) {
      double sc = atol + rtol * std::max(std::fabs(a[static_cast<std::size_t>(i)]),
                                         std::fabs(b[static_cast<std::size_t>(i)]));
      double q = err[static_cast<std::size_t>(i)] / sc;
      s += q * q;
    }
    return std::sqrt(s / S);
  };

  // Starting step size: standard curvature probe unless the caller pinned one.
  double h;
  if (opts.dt_init > 0) {
    h = std::min(opts.dt_init, t_end);
  } else {
    double d0 = 0, d1 = 0;
    for (int i = 0; i < S; ++i) {
      double sc = atol + rtol * std::fabs(y[static_cast<std::size_t>(i)]);
      double a = y[static_cast<std::size_t>(i)] / sc, b = k1[static_cast<std::size_t>(i)] / sc;
      d0 += a * a;
      d1 += b * b;
    }
    d0 = std::sqrt(d0 / S);
    d1 = std::sqrt(d1 / S);
    double h_guess = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h_guess = std::min(h_guess, t_end);
    for (int i = 0; i < S; ++i)
      ytmp[static_cast<std::size_t>(i)] =
          y[static_cast<std::size_t>(i)] + h_guess * k1[static_cast<std::size_t>(i)];
    rhs(ytmp.data(), k2.data());
    double d2 = 0;
    for (int i = 0; i < S; ++i) {
      double sc = atol + rtol * std::fabs(y[static_cast<std::size_t>(i)]);
      double q = (k2[static_cast<std::size_t>(i)] - k1[static_cast<std::size_t>(i)]) / sc;
      d2 += q * q;
    }
    d2 = std::sqrt(d2 / S) / h_guess;
    double h1 = (std::max(d1, d2) <= 1e-15)
                    ? std::max(1e-6, h_guess * 1e-3)
                    : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min({100 * h_guess, h1, t_end});
  }

  const double safe = 0.9, beta = 0.04, expo1 = 0.2 - beta * 0.75;
  double facold = 1e-4;
  bool rejected = false;
  double t = 0;
  std::size_t n_steps = 0;
  std::size_t sample_k = 1;

  auto stage = [&](const double* coef, int n_used, double* out) {
    const Vec* ks[6] = {&k1, &k2, &k3, &k4, &k5, &k6};
    for (int i = 0; i < S; ++i) {
      double acc = 0;
      for (int j = 0; j < n_used; ++j) acc += coef[j] * (*ks[j])[static_cast<std::size_t>(i)];
      out[i] = y[static_cast<std::size_t>(i)] + h * acc;
    }
  };

  while (t < t_end - 1e-14 * std::max(1.0, t_end)) {
    if (++n_steps > opts.max_steps)
      throw ConvergenceFailure("propagate: step budget exhausted before the horizon");
    if (h < 1e-14 * std::max(1.0, std::fabs(t)))
      throw ConvergenceFailure("propagate: step size underflow");
    if (t + h > t_end) h = t_end - t;

    {
      const double c1arr[1] = {A21};
      stage(c1arr, 1, ytmp.data());
      rhs(ytmp.data(), k2.data());
      const double c2arr[2] = {A31, A32};
      stage(c2arr, 2, ytmp.data());
      rhs(ytmp.data(), k3.data());
      const double c3arr[3] = {A41, A42, A43};
      stage(c3arr, 3, ytmp.data());
      rhs(ytmp.data(), k4.data());
      const double c4arr[4] = {A51, A52, A53, A54};
      stage(c4arr, 4, ytmp.data());
      rhs(ytmp.data(), k5.data());
      const double c5arr[5] = {A61, A62, A63, A64, A65};
      stage(c5arr, 5, ytmp.data());
      rhs(ytmp.data(), k6.data());
      const double c6arr[6] = {A71, 0.0, A73, A74, A75, A76};
      stage(c6arr, 6, y1.data());
    }
    RhsResult r7 = rhs(y1.data(), k7.data());

    for (int i = 0; i < S; ++i)
      ytmp[static_cast<std::size_t>(i)] =
          h * (E1 * k1[static_cast<std::size_t>(i)] + E3 * k3[static_cast<std::size_t>(i)] +
               E4 * k4[static_cast<std::size_t>(i)] + E5 * k5[static_cast<std::size_t>(i)] +
               E6 * k6[static_cast<std::size_t>(i)] + E7 * k7[static_cast<std::size_t>(i)]);
    double err = scaled_rms(ytmp, y, y1);
    if (!std::isfinite(err)) err = 1e8;

    double fac11 = std::pow(err, expo1);
    if (err > 1) {
      h /= std::min(5.0, fac11 / safe);
      rejected = true;
      continue;
    }

    // Accepted. Dense-output coefficients are cheap relative to seven force
    // evaluations, so build them unconditionally; events and sampling share
    // the same interpolant.
    for (int i = 0; i < S; ++i) {
      std::size_t u = static_cast<std::size_t>(i);
      rc1[u] = y[u];
      rc2[u] = y1[u] - y[u];
      rc3[u] = h * k1[u] - rc2[u];
      rc4[u] = rc2[u] - h * k7[u] - rc3[u];
      rc5[u] = h * (D1 * k1[u] + D3 * k3[u] + D4 * k4[u] + D5 * k5[u] + D6 * k6[u] + D7 * k7[u]);
    }
    auto dense_eval = [&](double theta, Vec& out) {
      double th1 = 1 - theta;
      for (int i = 0; i < S; ++i) {
        std::size_t u = static_cast<std::size_t>(i);
        out[u] = rc1[u] + theta * (rc2[u] + th1 * (rc3[u] + theta * (rc4[u] + th1 * rc5[u])));
      }
    };

    bool have_event = false;
    Termination ev_term = Termination::HorizonReached;
    double ev_theta = 1.0;
    if (r7.min_sep < rstop) {
      have_event = true;
      ev_term = Termination::CollisionDetected;
      double lo = 0, hi = 1;
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        dense_eval(mid, dense_tmp);
        (min_sep_at(sys, dense_tmp.data()) < rstop ? hi : lo) = mid;
      }
      ev_theta = hi;
    } else if (max_abs_coord(y1.data(), nd) > opts.blow_up) {
      have_event = true;
      ev_term = Termination::BlowUp;
      double lo = 0, hi = 1;
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        dense_eval(mid, dense_tmp);
        (max_abs_coord(dense_tmp.data(), nd) > opts.blow_up ? hi : lo) = mid;
      }
      ev_theta = hi;
    }
    double t_stop = have_event ? t + ev_theta * h : t + h;

    if (opts.sample_dt > 0) {
      double eps_t = 1e-9 * std::max(1.0, t_stop);
      while (true) {
        double next_t = static_cast<double>(sample_k) * opts.sample_dt;
        if (next_t > t_stop + eps_t || next_t > t_end + eps_t) break;
        double theta = std::clamp((next_t - t) / h, 0.0, 1.0);
        dense_eval(theta, dense_tmp);
        rec.emit(next_t, dense_tmp.data());
        ++sample_k;
      }
    }

    if (have_event) {
      dense_eval(ev_theta, dense_tmp);
      rec.emit(t_stop, dense_tmp.data());
      tr.termination = ev_term;
      double ev_sep = min_sep_at(sys, dense_tmp.data());
      tr.min_separation_seen = std::min(tr.min_separation_seen, ev_sep);
      return tr;
    }

    if (opts.sample_dt <= 0) rec.emit(t_stop, y1.data());

    double e_now = 0.5 * kinetic2(sys, y1.data() + nd) - r7.u;
    tr.max_energy_drift = std::max(tr.max_energy_drift, std::fabs(e_now - h0));
    tr.min_separation_seen = std::min(tr.min_separation_seen, r7.min_sep);

    t += h;
    y.swap(y1);
    k1.swap(k7);
    double fac = std::clamp(fac11 / (std::pow(facold, beta) * safe), 0.2, 5.0);
    double hnew = h / fac;
    if (rejected) hnew = std::min(hnew, h);
    rejected = false;
    h = hnew;
    facold = std::max(err, 1e-4);
  }

  if (opts.sample_dt > 0) rec.emit(t, y.data());
  tr.termination = Termination::HorizonReached;
  return tr;
}

Trajectory propagate_symplectic(const MassSystem& sys, const Vec& y0_in, double h0, double t_end,
                                const PropagateOptions& opts) {
  const int nd = sys.nd();
  require(opts.dt_fixed > 0, "propagate: dt_fixed must be positive");

  Trajectory tr;
  tr.nd = nd;
  tr.h0 = h0;
  Recorder rec(sys, tr);

  // Fourth-order composition of leapfrog: substep weights w1, w0, w1 with the
  // middle one negative.
  const double cb = std::cbrt(2.0);
  const double w1 = 1.0 / (2.0 - cb), w0 = -cb * w1;
  const double sub[3] = {w1, w0, w1};

  Vec y = y0_in;  // reuse augmented layout so the recorder applies unchanged
  double* x = y.data();
  double* v = y.data() + nd;
  double* action = y.data() + 2 * nd;
  double* jm = y.data() + 2 * nd + 1;

  Vec g(static_cast<std::size_t>(nd), 0.0);
  double u = 0;
  double min_sep = potential_and_gradient(sys, x, &u, g.data());
  double rstop = opts.collision_factor * min_sep;
  if (!std::isfinite(rstop)) rstop = 0;
  tr.min_separation_seen = min_sep;
  rec.emit(0.0, y.data());

  auto integrands = [&](double& lag, double& jm_rate) {
    double kin2 = kinetic2(sys, v);
    lag = 0.5 * kin2 + u;
    double rad2 = 2 * (h0 + u);
    jm_rate = (rad2 > 0 ? std::sqrt(rad2) : 0.0) * std::sqrt(kin2);
  };

  double t = 0;
  std::size_t n_steps = 0;
  std::size_t sample_k = 1;
  while (t < t_end - 1e-14 * std::max(1.0, t_end)) {
    if (++n_steps > opts.max_steps)
      throw ConvergenceFailure("propagate: step budget exhausted before the horizon");
    double dt = std::min(opts.dt_fixed, t_end - t);
    for (double w : sub) {
      double hs = w * dt;
      double l0, j0, l1, j1;
      integrands(l0, j0);
      for (int c = 0; c < nd; ++c)
        v[c] += 0.5 * hs * g[static_cast<std::size_t>(c)] /
                sys.coord_mass[static_cast<std::size_t>(c)];
      for (int c = 0; c < nd; ++c) x[c] += hs * v[c];
      std::fill(g.begin(), g.end(), 0.0);
      min_sep = potential_and_gradient(sys, x, &u, g.data());
      for (int c = 0; c < nd; ++c)
        v[c] += 0.5 * hs * g[static_cast<std::size_t>(c)] /
                sys.coord_mass[static_cast<std::size_t>(c)];
      integrands(l1, j1);
      *action += 0.5 * hs * (l0 + l1);
      *jm += 0.5 * hs * (j0 + j1);
      tr.min_separation_seen = std::min(tr.min_separation_seen, min_sep);
    }
    t += dt;

    if (!all_finite(y)) throw ConvergenceFailure("propagate: state became non-finite");
    double e_now = 0.5 * kinetic2(sys, v) - u;
    tr.max_energy_drift = std::max(tr.max_energy_drift, std::fabs(e_now - h0));

    bool collided = min_sep < rstop;
    bool blown = max_abs_coord(x, nd) > opts.blow_up;
    bool last = t >= t_end - 1e-14 * std::max(1.0, t_end);
    if (opts.sample_dt > 0) {
      double next_t = static_cast<double>(sample_k) * opts.sample_dt;
      if (t + 1e-12 >= next_t || collided || blown || last) {
        rec.emit(t, y.data());
        sample_k = static_cast<std::size_t>(std::floor(t / opts.sample_dt)) + 1;
      }
    } else {
      rec.emit(t, y.data());
    }
    if (collided) {
      tr.termination = Termination::CollisionDetected;
      return tr;
    }
    if (blown) {
      tr.termination = Termination::BlowUp;
      return tr;
    }
  }
  tr.termination = Termination::HorizonReached;
  return tr;
}

}  // namespace

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::HorizonReached: return "horizon";
    case Termination::CollisionDetected: return "collision";
    case Termination::BlowUp: return "blowup";
  }
  return "horizon";
}

Termination termination_from_name(const std::string& name) {
  if (name == "horizon") return Termination::HorizonReached;
  if (name == "collision") return Termination::CollisionDetected;
  if (name == "blowup") return Termination::BlowUp;
  throw InvalidInput("unknown termination name: " + name);
}

double energy(const MassSystem& sys, const Vec& x, const Vec& v) {
  check_shape(sys, x, "energy: x");
  check_shape(sys, v, "energy: v");
  return 0.5 * kinetic2(sys, v.data()) - potential_unchecked(sys, x);
}

bool hill_region_contains(const MassSystem& sys, double h, const Vec& x) {
  check_shape(sys, x, "hill_region_contains: x");
  return potential_unchecked(sys, x) + h >= 0;
}

Trajectory propagate(const MassSystem& sys, const Vec& x0, const Vec& v0, double t_end,
                     const PropagateOptions& opts) {
  check_shape(sys, x0, "propagate: x0");
  check_shape(sys, v0, "propagate: v0");
  require(all_finite(x0) && all_finite(v0), "propagate: non-finite initial state");
  require(t_end > 0, "propagate: horizon must be positive");
  require(opts.abs_tol > 0 && opts.rel_tol > 0, "propagate: tolerances must be positive");

  double h0 = energy(sys, x0, v0);
  require(std::isfinite(h0), "propagate: initial state is singular");

  Vec y0(static_cast<std::size_t>(2 * sys.nd() + 2), 0.0);
  std::copy(x0.begin(), x0.end(), y0.begin());
  std::copy(v0.begin(), v0.end(), y0.begin() + sys.nd());

  return opts.symplectic ? propagate_symplectic(sys, y0, h0, t_end, opts)
                         : propagate_adaptive(sys, y0, h0, t_end, opts);
}

void write_trajectory(const std::string& path, const MassSystem& sys, const Trajectory& tr) {
  std::ofstream out(path);
  require(out.good(), "write_trajectory: cannot open output file");
  char buf[40];
  auto fmt = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  out << "# raymin trajectory v1\n";
  out << "# bodies=" << sys.bodies() << " dim=" << sys.dim << "\n";
  out << "# masses=";
  for (int i = 0; i < sys.bodies(); ++i)
    out << (i ? "," : "") << fmt(sys.masses[static_cast<std::size_t>(i)]);
  out << "\n";
  out << "# h0=" << fmt(tr.h0) << " termination=" << termination_name(tr.termination) << "\n";
  out << "# max_energy_drift=" << fmt(tr.max_energy_drift)
      << " min_separation=" << fmt(tr.min_separation_seen) << "\n";
  out << "# columns: t x*" << tr.nd << " v*" << tr.nd << " energy action jm\n";
  for (std::size_t k = 0; k < tr.samples(); ++k) {
    out << fmt(tr.times[k]);
    for (int c = 0; c < tr.nd; ++c) out << ' ' << fmt(tr.x(k)[c]);
    for (int c = 0; c < tr.nd; ++c) out << ' ' << fmt(tr.v(k)[c]);
    out << ' ' << fmt(tr.energies[k]) << ' ' << fmt(tr.action_cum[k]) << ' ' << fmt(tr.jm_cum[k])
        << '\n';
  }
  require(out.good(), "write_trajectory: write failed");
}

Trajectory read_trajectory(const std::string& path, MassSystem& sys) {
  std::ifstream in(path);
  require(in.good(), "read_trajectory: cannot open file");

  std::map<std::string, std::string> meta;
  Trajectory tr;
  std::string line;
  std::vector<double> row;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      require(!header_done, "read_trajectory: header line after data");
      std::istringstream ls(line.substr(1));
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      continue;
    }
    if (!header_done) {
      header_done = true;
      require(meta.count("bodies") && meta.count("dim") && meta.count("masses") &&
                  meta.count("h0") && meta.count("termination"),
              "read_trajectory: incomplete header");
      std::vector<double> masses;
      std::istringstream ms(meta["masses"]);
      std::string part;
      while (std::getline(ms, part, ',')) masses.push_back(std::strtod(part.c_str(), nullptr));
      int dim = std::atoi(meta["dim"].c_str());
      require(static_cast<int>(masses.size()) == std::atoi(meta["bodies"].c_str()),
              "read_trajectory: masses count disagrees with bodies");
      sys = MassSystem::make(std::move(masses), dim);
      tr.nd = sys.nd();
      tr.h0 = std::strtod(meta["h0"].c_str(), nullptr);
      tr.termination = termination_from_name(meta["termination"]);
      if (meta.count("max_energy_drift"))
        tr.max_energy_drift = std::strtod(meta["max_energy_drift"].c_str(), nullptr);
      if (meta.count("min_separation"))
        tr.min_separation_seen = std::strtod(meta["min_separation"].c_str(), nullptr);
    }
    row.clear();
    std::istringstream ds(line);
    double val;
    while (ds >> val) row.push_back(val);
    require(static_cast<int>(row.size()) == 2 * tr.nd + 4,
            "read_trajectory: wrong column count in data row");
    tr.times.push_back(row[0]);
    tr.xs.insert(tr.xs.end(), row.begin() + 1, row.begin() + 1 + tr.nd);
    tr.vs.insert(tr.vs.end(), row.begin() + 1 + tr.nd, row.begin() + 1 + 2 * tr.nd);
    tr.energies.push_back(row[static_cast<std::size_t>(2 * tr.nd + 1)]);
    tr.action_cum.push_back(row[static_cast<std::size_t>(2 * tr.nd + 2)]);
    tr.jm_cum.push_back(row[static_cast<std::size_t>(2 * tr.nd + 3)]);
  }
  require(header_done, "read_trajectory: no data rows");
  return tr;
}

}  // namespace raymin
