#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Double-precision arithmetic kernels behind the embedding, attention and FFN
// inner loops. Every kernel has a scalar reference implementation and, on
// x86-64, an AVX2/FMA variant. The backend is selected once at startup from
// CPUID and can be forced with SOLO_KERNELS=scalar|avx2; both backends are
// compiled in and equivalence-tested against each other.
//
// All matrices are dense row-major. GEMM kernels accumulate into C; callers
// zero-fill C when they want a plain product.

namespace solo::kernels {

#define SOLO_KERNEL_LIST(X)                                                          \
  /* dot(a, b, n): inner product */                                                  \
  X(double, dot, (const double* a, const double* b, std::size_t n), (a, b, n))       \
  /* axpy: y += alpha * x */                                                         \
  X(void, axpy, (double alpha, const double* x, double* y, std::size_t n),           \
    (alpha, x, y, n))                                                                \
  /* sum of elements */                                                              \
  X(double, sum, (const double* x, std::size_t n), (x, n))                           \
  /* sum of squares */                                                               \
  X(double, sumsq, (const double* x, std::size_t n), (x, n))                         \
  /* x *= s, in place */                                                             \
  X(void, scale, (double s, double* x, std::size_t n), (s, x, n))                    \
  /* dst[i] = src[i] / 255 * 2 - 1, mapping 8-bit pixels into [-1, 1] */             \
  X(void, u8_to_unit, (const std::uint8_t* src, double* dst, std::size_t n),         \
    (src, dst, n))                                                                   \
  /* C[m,n] += A[m,k] * B[k,n] */                                                    \
  X(void, gemm_nn,                                                                   \
    (std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,  \
     double* c),                                                                     \
    (m, k, n, a, b, c))                                                              \
  /* C[m,n] += A[m,k] * B[n,k]^T  (B stored row-major with n rows of length k) */    \
  X(void, gemm_nt,                                                                   \
    (std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,  \
     double* c),                                                                     \
    (m, k, n, a, b, c))                                                              \
  /* C[k,n] += A[m,k]^T * B[m,n] */                                                  \
  X(void, gemm_tn,                                                                   \
    (std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,  \
     double* c),                                                                     \
    (m, k, n, a, b, c))

#define SOLO_DECLARE_KERNEL(ret, name, args, call) ret name args;

// Dispatched entry points.
SOLO_KERNEL_LIST(SOLO_DECLARE_KERNEL)

namespace scalar {
SOLO_KERNEL_LIST(SOLO_DECLARE_KERNEL)
}  // namespace scalar

#if defined(SOLO_HAVE_AVX2_BUILD)
namespace avx2 {
SOLO_KERNEL_LIST(SOLO_DECLARE_KERNEL)
}  // namespace avx2
bool cpu_has_avx2();
#endif

#undef SOLO_DECLARE_KERNEL

/// Name of the backend currently bound: "scalar" or "avx2".
std::string_view active_backend();

/// Rebind all dispatched kernels. Returns false (and leaves the binding
/// unchanged) when the requested backend is unavailable on this machine.
bool set_backend(std::string_view name);

}  // namespace solo::kernels
