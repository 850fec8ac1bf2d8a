#pragma once

#include <cstddef>

// Dense double-precision kernels used on the inference hot path. Each kernel
// has a portable reference implementation and, on x86-64, an AVX2/FMA
// variant selected at runtime. Results differ from the reference only by
// summation order.

namespace shsmm::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = A x with A row-major rows x cols.
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  void (*hadamard)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double* a, double s, std::size_t n);
  double (*sum_abs)(const double* a, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

// Best table for this CPU. Setting SHSMM_ISA=scalar in the environment pins
// the reference kernels.
const KernelTable& active();
Isa active_isa();
bool cpu_has_avx2();

}  // namespace shsmm::kernels
