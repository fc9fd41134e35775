#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "semsic/kernels/kernels.hpp"

namespace semsic::kernels {
namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SEMSIC_KERNELS"); env && std::string(env) == "scalar")
    return &scalar_table();
  if (cpu_supports_avx2() && avx2_table() != nullptr) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::size_t ld,
                    std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * ld + c];
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::kAvx2 && (avx2_table() == nullptr || !cpu_supports_avx2())) return;
  current().store(isa == Isa::kAvx2 ? avx2_table() : &scalar_table());
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  thread_local std::vector<double> at, bt;
  if (trans_a) {
    // A is stored k x m.
    transpose_into(k, m, a, lda, at);
    a = at.data();
    lda = k;
  }
  if (trans_b) {
    // B is stored n x k.
    transpose_into(n, k, b, ldb, bt);
    b = bt.data();
    ldb = n;
  }
  active().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace semsic::kernels
