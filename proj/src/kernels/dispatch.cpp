#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lightllm/kernels.hpp"

namespace lightllm::kernels {
namespace {

constexpr KernelTable kScalar{Backend::scalar, scalar::dot, scalar::axpy, scalar::gemm_nn,
                              scalar::gemm_nt, scalar::gemm_tn};
#if defined(LIGHTLLM_HAVE_AVX2_KERNELS)
constexpr KernelTable kAvx2{Backend::avx2, avx2::dot, avx2::axpy, avx2::gemm_nn, avx2::gemm_nt,
                            avx2::gemm_tn};
#endif
#if defined(LIGHTLLM_HAVE_NEON_KERNELS)
constexpr KernelTable kNeon{Backend::neon, neon::dot, neon::axpy, neon::gemm_nn, neon::gemm_nt,
                            neon::gemm_tn};
#endif

// LIGHTLLM_KERNELS=scalar forces the reference path, e.g. to compare runs.
const KernelTable* initial_table() {
  if (const char* forced = std::getenv("LIGHTLLM_KERNELS")) {
    const std::string value(forced);
    if (value == "scalar") return &table(Backend::scalar);
    if (value == "avx2" && supported(Backend::avx2)) return &table(Backend::avx2);
    if (value == "neon" && supported(Backend::neon)) return &table(Backend::neon);
  }
  return &table(detect());
}

const KernelTable*& current() {
  static const KernelTable* ptr = initial_table();
  return ptr;
}

}  // namespace

bool supported(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(LIGHTLLM_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(LIGHTLLM_HAVE_NEON_KERNELS)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!supported(backend))
    throw std::invalid_argument("kernel backend not available: " + std::string(name(backend)));
  switch (backend) {
#if defined(LIGHTLLM_HAVE_AVX2_KERNELS)
    case Backend::avx2:
      return kAvx2;
#endif
#if defined(LIGHTLLM_HAVE_NEON_KERNELS)
    case Backend::neon:
      return kNeon;
#endif
    default:
      return kScalar;
  }
}

Backend detect() {
  if (supported(Backend::avx2)) return Backend::avx2;
  if (supported(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

const KernelTable& active() { return *current(); }

void select(Backend backend) { current() = &table(backend); }

std::string_view name(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace lightllm::kernels
