#pragma once

#include <cmath>
#include <cstddef>
#include <deque>

#include "raymin/kernels.hpp"
#include "raymin/types.hpp"

namespace raymin {

struct LbfgsOptions {
  int max_iter = 400;
  int history = 10;
  double gtol = 1e-9;       // ||g||_2 target
  double ftol_rel = 1e-14;  // relative decrease considered stalled
  int max_backtracks = 48;
};

enum class LbfgsStop { GradTol, Stalled, LineSearchFail, MaxIter, NonFinite };

struct LbfgsResult {
  double f = 0;
  double grad_norm = 0;
  int iterations = 0;
  LbfgsStop stop = LbfgsStop::MaxIter;
  bool converged() const { return stop == LbfgsStop::GradTol || stop == LbfgsStop::Stalled; }
};

// Objective contract: obj(x, g) fills g and returns {value, feasible}.
// Infeasible trial points (collision barrier) reject the step during line
// search; the start point must be feasible.
struct ObjSample {
  double f;
  bool feasible;
};

template <class F>
LbfgsResult lbfgs_minimize(F&& obj, Vec& x, const LbfgsOptions& opt) {
  const auto& K = kern::ops();
  const std::size_t n = x.size();
  auto nrm2 = [&](const Vec& v) { return std::sqrt(K.dot(v.data(), v.data(), n)); };

  Vec g(n), g_new(n), d(n), x_new(n);
  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vec alpha_buf;

  LbfgsResult res;
  ObjSample cur = obj(x, g);
  if (!cur.feasible || !std::isfinite(cur.f)) {
    res.stop = LbfgsStop::NonFinite;
    res.f = cur.f;
    res.grad_norm = nrm2(g);
    return res;
  }

  int stall_count = 0;
  bool tried_reset = false;

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    res.iterations = iter;
    double gn = nrm2(g);
    res.grad_norm = gn;
    res.f = cur.f;
    if (gn <= opt.gtol) {
      res.stop = LbfgsStop::GradTol;
      return res;
    }

    // Two-loop recursion for d = -H g.
    d = g;
    alpha_buf.assign(s_hist.size(), 0.0);
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      double a = rho_hist[i] * K.dot(s_hist[i].data(), d.data(), n);
      alpha_buf[i] = a;
      K.axpy(-a, y_hist[i].data(), d.data(), n);
    }
    if (!s_hist.empty()) {
      const Vec& s = s_hist.back();
      const Vec& y = y_hist.back();
      double gamma = K.dot(s.data(), y.data(), n) / K.dot(y.data(), y.data(), n);
      for (auto& v : d) v *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      double b = rho_hist[i] * K.dot(y_hist[i].data(), d.data(), n);
      K.axpy(alpha_buf[i] - b, s_hist[i].data(), d.data(), n);
    }
    for (auto& v : d) v = -v;

    double dir_deriv = K.dot(g.data(), d.data(), n);
    if (dir_deriv >= 0) {
      // Not a descent direction; drop curvature memory and go downhill.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dir_deriv = -gn * gn;
    }

    double alpha = s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, gn)) : 1.0;
    const double c1 = 1e-4;
    bool accepted = false;
    ObjSample trial{0, false};
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + alpha * d[i];
      trial = obj(x_new, g_new);
      if (trial.feasible && std::isfinite(trial.f) && trial.f <= cur.f + c1 * alpha * dir_deriv) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!tried_reset && !s_hist.empty()) {
        // One retry from plain gradient descent before giving up.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        tried_reset = true;
        continue;
      }
      res.stop = LbfgsStop::LineSearchFail;
      return res;
    }
    tried_reset = false;

    // Curvature pair; skip when it would break positive definiteness.
    Vec s_vec(n), y_vec(n);
    for (std::size_t i = 0; i < n; ++i) {
      s_vec[i] = x_new[i] - x[i];
      y_vec[i] = g_new[i] - g[i];
    }
    double sy = K.dot(s_vec.data(), y_vec.data(), n);
    double yy = K.dot(y_vec.data(), y_vec.data(), n);
    double ss = K.dot(s_vec.data(), s_vec.data(), n);
    if (sy > 1e-10 * std::sqrt(ss * yy)) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    double decrease = cur.f - trial.f;
    x.swap(x_new);
    g.swap(g_new);
    cur = trial;

    if (decrease <= opt.ftol_rel * (std::fabs(cur.f) + std::fabs(trial.f) + 1e-30)) {
      if (++stall_count >= 2) {
        res.f = cur.f;
        res.grad_norm = nrm2(g);
        res.iterations = iter + 1;
        res.stop = LbfgsStop::Stalled;
        return res;
      }
    } else {
      stall_count = 0;
    }
  }
  res.f = cur.f;
  res.grad_norm = nrm2(g);
  res.stop = LbfgsStop::MaxIter;
  return res;
}

}  // namespace raymin
