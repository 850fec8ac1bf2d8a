#include "shsmm/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace shsmm::kernels {

namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_ref(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_ref(a + r * cols, x, cols);
}

void hadamard_ref(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_ref(double* a, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] *= s;
}

double sum_abs_ref(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(a[i]);
  return s;
}

const KernelTable kScalar{dot_ref, axpy_ref, gemv_ref, hadamard_ref, scale_ref, sum_abs_ref};

const KernelTable& pick() {
  const char* env = std::getenv("SHSMM_ISA");
  if (env && std::strcmp(env, "scalar") == 0) return kScalar;
  if (const KernelTable* t = avx2_table(); t && cpu_has_avx2()) return *t;
  return kScalar;
}

}  // namespace

#ifndef SHSMM_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

const KernelTable& scalar_table() { return kScalar; }

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = pick();
  return table;
}

Isa active_isa() { return &active() == &kScalar ? Isa::Scalar : Isa::Avx2; }

}  // namespace shsmm::kernels
