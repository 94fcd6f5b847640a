// Every SIMD variant must agree with the scalar reference kernels.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "lightllm/kernels.hpp"
#include "lightllm/rng.hpp"

using namespace lightllm;
using kernels::Backend;

namespace {

std::vector<double> random_vec(SeededRng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::vector<Backend> simd_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::avx2, Backend::neon})
    if (kernels::supported(b)) out.push_back(b);
  return out;
}

// |x - y| <= tol * scale, where scale bounds the magnitude of the summands.
void check_close(const std::vector<double>& got, const std::vector<double>& want, double scale) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    REQUIRE(std::abs(got[i] - want[i]) <= 1e-13 * scale + 1e-300);
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(kernels::supported(Backend::scalar));
  CHECK(kernels::table(Backend::scalar).backend == Backend::scalar);
  CHECK(kernels::supported(kernels::detect()));
}

TEST_CASE("unsupported backend is rejected") {
  for (Backend b : {Backend::avx2, Backend::neon})
    if (!kernels::supported(b)) CHECK_THROWS_AS(kernels::table(b), std::invalid_argument);
}

TEST_CASE("dot and axpy match the scalar reference") {
  SeededRng rng(11, 0);
  const auto& ref = kernels::table(Backend::scalar);
  for (Backend backend : simd_backends()) {
    const auto& kt = kernels::table(backend);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 15u, 16u, 17u, 33u, 64u, 257u}) {
      auto a = random_vec(rng, n);
      auto b = random_vec(rng, n);
      CHECK(std::abs(kt.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
            1e-13 * static_cast<double>(n + 1));
      auto y1 = random_vec(rng, n);
      auto y2 = y1;
      kt.axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      check_close(y1, y2, 2.0);
    }
  }
}

TEST_CASE("gemm variants match the scalar reference on ragged shapes") {
  SeededRng rng(12, 0);
  const auto& ref = kernels::table(Backend::scalar);
  const std::size_t dims[] = {1, 2, 3, 4, 5, 8, 9, 13, 17, 32, 33};
  for (Backend backend : simd_backends()) {
    const auto& kt = kernels::table(backend);
    for (std::size_t m : dims)
      for (std::size_t n : dims)
        for (std::size_t k : {1u, 3u, 8u, 19u}) {
          const double scale = static_cast<double>(k + 1);
          auto a = random_vec(rng, m * k);
          auto b_nn = random_vec(rng, k * n);
          auto c0 = random_vec(rng, m * n);

          auto c1 = c0, c2 = c0;
          kt.gemm_nn(m, n, k, a.data(), b_nn.data(), c1.data());
          ref.gemm_nn(m, n, k, a.data(), b_nn.data(), c2.data());
          check_close(c1, c2, scale);

          auto b_nt = random_vec(rng, n * k);
          c1 = c0, c2 = c0;
          kt.gemm_nt(m, n, k, a.data(), b_nt.data(), c1.data());
          ref.gemm_nt(m, n, k, a.data(), b_nt.data(), c2.data());
          check_close(c1, c2, scale);

          auto a_tn = random_vec(rng, k * m);
          c1 = c0, c2 = c0;
          kt.gemm_tn(m, n, k, a_tn.data(), b_nn.data(), c1.data());
          ref.gemm_tn(m, n, k, a_tn.data(), b_nn.data(), c2.data());
          check_close(c1, c2, scale);
        }
  }
}

TEST_CASE("scalar gemm agrees with a naive triple loop") {
  SeededRng rng(13, 0);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<double> c(m * n, 0.0);
  kernels::scalar::gemm_nn(m, n, k, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double want = 0.0;
      for (std::size_t p = 0; p < k; ++p) want += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("select switches the active table") {
  const Backend before = kernels::active().backend;
  kernels::select(Backend::scalar);
  CHECK(kernels::active().backend == Backend::scalar);
  kernels::select(before);
  CHECK(kernels::active().backend == before);
}
