#include <cstdlib>
#include <cstring>

#include "raymin/kernels.hpp"

namespace raymin::kern {

// Defined in kernels_avx2.cpp (null when not built for x86-64).
const Ops* avx2_ops_impl();

const Ops* avx2_ops() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return avx2_ops_impl();
#endif
  return nullptr;
}

namespace {

const Ops* select() {
  const char* env = std::getenv("RAYMIN_SIMD");
  if (env) {
    if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
    if (std::strcmp(env, "avx2") == 0 && avx2_ops()) return avx2_ops();
  }
  if (const Ops* v = avx2_ops()) return v;
  return &scalar_ops();
}

}  // namespace

const Ops& ops() {
  static const Ops* chosen = select();
  return *chosen;
}

}  // namespace raymin::kern
