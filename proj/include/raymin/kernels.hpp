#pragma once

#include <cstddef>

// Hot-loop kernels over flat double arrays, with a scalar reference
// implementation and an AVX2+FMA variant selected once at startup.
// Set RAYMIN_SIMD=scalar (or avx2) to override the dispatch.
//
// Planar layout for pair kernels: one contiguous array per coordinate,
// one entry per path segment, so the inner loops stay stride-1.

namespace raymin::kern {

struct PairSums {
  double weighted_inv_r;  // sum_k wq[k] / r_k   (wq == nullptr means wq[k] = 1)
  double min_r2;
};

struct Ops {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // sum_i w[i] * (b[i] - a[i])^2.  a and b may overlap (offset views of one array).
  double (*wdiff2)(const double* a, const double* b, const double* w, std::size_t n);

  // One body pair, d = 2, planar coordinates of n segment midpoints.
  // Accumulates mm * wq[k] * grad(1/r_k) into the g* planes when they are
  // non-null; the gradient is taken w.r.t. body a, body b gets the negative.
  PairSums (*pair_d2)(const double* ax, const double* ay, const double* bx, const double* by,
                      std::size_t n, double mm, const double* wq, double* gax, double* gay,
                      double* gbx, double* gby);

  // min over k of (ax-bx)^2 + (ay-by)^2; no division, used for barrier scans.
  double (*min_r2_d2)(const double* ax, const double* ay, const double* bx, const double* by,
                      std::size_t n);
};

const Ops& scalar_ops();

// Null when the CPU (or build) lacks AVX2+FMA.
const Ops* avx2_ops();

// Runtime-selected implementation; stable for the process lifetime.
const Ops& ops();

}  // namespace raymin::kern
