#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "rsfiqa/numerics/kernels.hpp"

using namespace rsfiqa;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * scale);
}

}  // namespace

TEST_CASE("scalar kernel set is always available and listed first") {
  const auto sets = kernels::available_kernels();
  REQUIRE(!sets.empty());
  CHECK(sets.front()->name == "scalar");
  CHECK(kernels::select("scalar"));
  CHECK(kernels::active().name == "scalar");
  CHECK_FALSE(kernels::select("does-not-exist"));
  CHECK(kernels::active().name == "scalar");
  kernels::select(sets.back()->name);
}

TEST_CASE("every kernel set agrees with the scalar reference") {
  const auto& ref = kernels::scalar_kernels();
  std::mt19937_64 rng(42);
  for (const kernels::KernelSet* set : kernels::available_kernels()) {
    CAPTURE(set->name);
    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 9u, 17u, 64u, 131u}) {
      auto x = random_vec(n, rng), y = random_vec(n, rng);
      CHECK(std::abs(set->dot(x.data(), y.data(), n) - ref.dot(x.data(), y.data(), n)) <= 1e-12 * n);
      auto y1 = y, y2 = y;
      set->axpy(0.37, x.data(), y1.data(), n);
      ref.axpy(0.37, x.data(), y2.data(), n);
      check_close(y1, y2, 1.0);
    }
    for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {4, 4, 4}, {5, 7, 3}, {9, 13, 11},
                           {16, 32, 27}, {33, 5, 70}}) {
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(k);
      auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c0 = random_vec(m * n, rng);
      auto c1 = c0, c2 = c0;
      set->gemm_nn(m, n, k, a.data(), b.data(), c1.data());
      ref.gemm_nn(m, n, k, a.data(), b.data(), c2.data());
      check_close(c1, c2, static_cast<double>(k));

      auto bt = random_vec(n * k, rng);
      c1 = c0;
      c2 = c0;
      set->gemm_nt(m, n, k, a.data(), bt.data(), c1.data());
      ref.gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
      check_close(c1, c2, static_cast<double>(k));

      auto at = random_vec(k * m, rng);
      c1 = c0;
      c2 = c0;
      set->gemm_tn(m, n, k, at.data(), b.data(), c1.data());
      ref.gemm_tn(m, n, k, at.data(), b.data(), c2.data());
      check_close(c1, c2, static_cast<double>(k));
    }
  }
}

TEST_CASE("gemm_nn matches an explicit triple loop") {
  const std::size_t m = 6, n = 5, k = 4;
  std::mt19937_64 rng(3);
  auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
  for (const kernels::KernelSet* set : kernels::available_kernels()) {
    std::vector<double> c(m * n, 0.0);
    set->gemm_nn(m, n, k, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
        CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-13));
      }
  }
}
