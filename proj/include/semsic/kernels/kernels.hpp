#pragma once
// Dense double-precision kernels used by the tensor engine.
//
// Every kernel has a portable scalar reference and an AVX2/FMA variant.  The
// variant is chosen once at startup from CPUID; SEMSIC_KERNELS=scalar in the
// environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace semsic::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  // C[m x n] += A[m x k] * B[k x n], all row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*scale)(std::size_t n, double alpha, double* x);
  // z = x + y (z may alias x or y)
  void (*add)(std::size_t n, const double* x, const double* y, double* z);
  // z = x * y elementwise
  void (*mul)(std::size_t n, const double* x, const double* y, double* z);
  double (*sum)(const double* x, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  void (*relu)(std::size_t n, const double* x, double* y);
  // dx += dy where x > 0
  void (*relu_backward)(std::size_t n, const double* x, const double* dy, double* dx);
};

const KernelTable& scalar_table();
// Null when the translation unit was built without AVX2 support.
const KernelTable* avx2_table();

// The active table: AVX2 when the CPU supports it, unless overridden.
const KernelTable& active();
void force_isa(Isa isa);
std::string_view isa_name(Isa isa);
bool cpu_supports_avx2();

// Convenience wrappers that route through the active table.
// C[m x n] += op(A) * op(B) where op is optional transposition.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc);

}  // namespace semsic::kernels
