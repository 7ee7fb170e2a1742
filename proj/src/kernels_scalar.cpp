#include <cmath>
#include <limits>

#include "raymin/kernels.hpp"

namespace raymin::kern {
namespace {

double dot_s(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_s(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double wdiff2_s(const double* a, const double* b, const double* w, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = b[i] - a[i];
    s += w[i] * d * d;
  }
  return s;
}

PairSums pair_d2_s(const double* ax, const double* ay, const double* bx, const double* by,
                   std::size_t n, double mm, const double* wq, double* gax, double* gay,
                   double* gbx, double* gby) {
  double acc = 0;
  double min_r2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    double dx = ax[k] - bx[k];
    double dy = ay[k] - by[k];
    double r2 = dx * dx + dy * dy;
    if (r2 < min_r2) min_r2 = r2;
    double r = std::sqrt(r2);
    double w = wq ? wq[k] : 1.0;
    double inv_r = 1.0 / r;
    acc += w * inv_r;
    if (gax) {
      // d/d(a) of mm/r = -mm * (a-b) / r^3
      double c = -mm * w * inv_r * inv_r * inv_r;
      gax[k] += c * dx;
      gay[k] += c * dy;
      gbx[k] -= c * dx;
      gby[k] -= c * dy;
    }
  }
  return {acc, min_r2};
}

double min_r2_d2_s(const double* ax, const double* ay, const double* bx, const double* by,
                   std::size_t n) {
  double min_r2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    double dx = ax[k] - bx[k];
    double dy = ay[k] - by[k];
    double r2 = dx * dx + dy * dy;
    if (r2 < min_r2) min_r2 = r2;
  }
  return min_r2;
}

const Ops kScalar = {"scalar", dot_s, axpy_s, wdiff2_s, pair_d2_s, min_r2_d2_s};

}  // namespace

const Ops& scalar_ops() { return kScalar; }

}  // namespace raymin::kern
