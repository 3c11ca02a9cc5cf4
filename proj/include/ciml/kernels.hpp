#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels backing all matrix arithmetic.
// A scalar reference implementation always exists; on x86-64 an AVX2+FMA
// variant is selected at runtime when the CPU supports it. The environment
// variable CIML_SIMD=scalar|avx2 overrides the automatic choice.
//
// GEMM conventions (all row-major, accumulate into C):
//   gemm_nn: C(m x n) += A(m x k) * B(k x n)
//   gemm_nt: C(m x n) += A(m x k) * B(n x k)^T
//   gemm_tn: C(m x n) += A(k x m)^T * B(k x n)
namespace ciml::kernels {

struct Ops {
  void (*gemm_nn)(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);
  void (*gemm_nt)(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);
  void (*gemm_tn)(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // c = a .* b
  void (*hadamard)(const double* a, const double* b, double* c, std::size_t n);
  // y += a .* b
  void (*fmadd)(const double* a, const double* b, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
};

const Ops& scalar_ops();
#if defined(__x86_64__)
const Ops& avx2_ops();
bool avx2_supported();
#endif

// Backend selected at first use (CPU probe + CIML_SIMD override).
const Ops& active();
const char* backend_name();

}  // namespace ciml::kernels
