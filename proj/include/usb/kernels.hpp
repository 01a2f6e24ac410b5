#pragma once

// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation; an AVX2+FMA variant is selected at runtime when the CPU
// supports it. Callers go through the free functions below, which forward to
// the active table.

#include <cstddef>
#include <string_view>

namespace usb::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sq_dist)(const double* a, const double* b, std::size_t n);
  // C(m x n) (+)= A(m x k) * B(n x k)^T, all row-major with leading dims.
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate);
  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc);
  // C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc);
};

const KernelTable& scalar_table();
/// Null when the build has no AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

/// The table used by the free functions. Chosen once from CPU features;
/// USB_FORCE_SCALAR=1 in the environment pins the scalar table.
const KernelTable& active();

/// Override the dispatch (tests, benchmarking). Returns false when the
/// requested ISA is unavailable; the active table is then unchanged.
bool set_active(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline double sq_dist(const double* a, const double* b, std::size_t n) {
  return active().sq_dist(a, b, n);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    bool accumulate) {
  active().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_nn_acc(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t lda, const double* b,
                        std::size_t ldb, double* c, std::size_t ldc) {
  active().gemm_nn_acc(m, n, k, a, lda, b, ldb, c, ldc);
}
inline void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t lda, const double* b,
                        std::size_t ldb, double* c, std::size_t ldc) {
  active().gemm_tn_acc(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace usb::kernels
