#pragma once

// Dense double-precision inner loops used by the tensor engine.
//
// Every kernel exists as a portable scalar reference and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (AArch64) variant. The variant is
// picked once at startup from CPUID; select() overrides it (tests use this to
// check every variant against the scalar reference).
//
// All matrices are row-major and contiguous. GEMM kernels accumulate into C.

#include <cstddef>
#include <string_view>

namespace lightllm::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

bool supported(Backend backend);

// Table for a specific backend; throws std::invalid_argument when the CPU or
// build lacks it.
const KernelTable& table(Backend backend);

// Table currently used by the tensor engine.
const KernelTable& active();

// Switch the engine's backend. Not thread-safe; call before any work starts.
void select(Backend backend);

// Best backend the running CPU supports.
Backend detect();

std::string_view name(Backend backend);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define LIGHTLLM_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
}  // namespace avx2
#endif

#if defined(__aarch64__) || defined(_M_ARM64)
#define LIGHTLLM_HAVE_NEON_KERNELS 1
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
}  // namespace neon
#endif

}  // namespace lightllm::kernels
