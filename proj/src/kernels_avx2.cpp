// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; callers must check avx2_ops() != nullptr before use.

#include "raymin/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace raymin::kern {
namespace {

static inline double hsum4(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sw = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sw));
}

static inline double hmin4(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_min_pd(lo, hi);
  __m128d sw = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_min_sd(lo, sw));
}

double dot_v(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc);
  double s = hsum4(acc);
  for (; k < n; ++k) s += a[k] * b[k];
  return s;
}

void axpy_v(double alpha, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d vy = _mm256_loadu_pd(y + k);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), vy);
    _mm256_storeu_pd(y + k, vy);
  }
  for (; k < n; ++k) y[k] += alpha * x[k];
}

double wdiff2_v(const double* a, const double* b, const double* w, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(b + k), _mm256_loadu_pd(a + k));
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + k), d), d, acc);
  }
  double s = hsum4(acc);
  for (; k < n; ++k) {
    double d = b[k] - a[k];
    s += w[k] * d * d;
  }
  return s;
}

PairSums pair_d2_v(const double* ax, const double* ay, const double* bx, const double* by,
                   std::size_t n, double mm, const double* wq, double* gax, double* gay,
                   double* gbx, double* gby) {
  __m256d acc = _mm256_setzero_pd();
  __m256d vmin = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d vmm = _mm256_set1_pd(mm);
  __m256d one = _mm256_set1_pd(1.0);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(ax + k), _mm256_loadu_pd(bx + k));
    __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ay + k), _mm256_loadu_pd(by + k));
    __m256d r2 = _mm256_fmadd_pd(dx, dx, _mm256_mul_pd(dy, dy));
    vmin = _mm256_min_pd(vmin, r2);
    __m256d inv_r = _mm256_div_pd(one, _mm256_sqrt_pd(r2));
    __m256d w = wq ? _mm256_loadu_pd(wq + k) : one;
    acc = _mm256_fmadd_pd(w, inv_r, acc);
    if (gax) {
      __m256d inv_r2 = _mm256_mul_pd(inv_r, inv_r);
      __m256d c = _mm256_mul_pd(_mm256_mul_pd(vmm, w), _mm256_mul_pd(inv_r2, inv_r));
      c = _mm256_sub_pd(_mm256_setzero_pd(), c);
      _mm256_storeu_pd(gax + k, _mm256_fmadd_pd(c, dx, _mm256_loadu_pd(gax + k)));
      _mm256_storeu_pd(gay + k, _mm256_fmadd_pd(c, dy, _mm256_loadu_pd(gay + k)));
      _mm256_storeu_pd(gbx + k, _mm256_fnmadd_pd(c, dx, _mm256_loadu_pd(gbx + k)));
      _mm256_storeu_pd(gby + k, _mm256_fnmadd_pd(c, dy, _mm256_loadu_pd(gby + k)));
    }
  }
  double s = hsum4(acc);
  double min_r2 = hmin4(vmin);
  for (; k < n; ++k) {
    double dx = ax[k] - bx[k];
    double dy = ay[k] - by[k];
    double r2 = dx * dx + dy * dy;
    if (r2 < min_r2) min_r2 = r2;
    double inv_r = 1.0 / std::sqrt(r2);
    double w = wq ? wq[k] : 1.0;
    s += w * inv_r;
    if (gax) {
      double c = -mm * w * inv_r * inv_r * inv_r;
      gax[k] += c * dx;
      gay[k] += c * dy;
      gbx[k] -= c * dx;
      gby[k] -= c * dy;
    }
  }
  return {s, min_r2};
}

double min_r2_d2_v(const double* ax, const double* ay, const double* bx, const double* by,
                   std::size_t n) {
  __m256d vmin = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(ax + k), _mm256_loadu_pd(bx + k));
    __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ay + k), _mm256_loadu_pd(by + k));
    vmin = _mm256_min_pd(vmin, _mm256_fmadd_pd(dx, dx, _mm256_mul_pd(dy, dy)));
  }
  double min_r2 = hmin4(vmin);
  for (; k < n; ++k) {
    double dx = ax[k] - bx[k];
    double dy = ay[k] - by[k];
    double r2 = dx * dx + dy * dy;
    if (r2 < min_r2) min_r2 = r2;
  }
  return min_r2;
}

const Ops kAvx2 = {"avx2", dot_v, axpy_v, wdiff2_v, pair_d2_v, min_r2_d2_v};

}  // namespace

const Ops* avx2_ops_impl() { return &kAvx2; }

}  // namespace raymin::kern

#else

namespace raymin::kern {
const Ops* avx2_ops_impl() { return nullptr; }
}  // namespace raymin::kern

#endif
