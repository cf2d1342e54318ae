#pragma once

// Dense double-precision inner loops. Every routine has a portable scalar
// reference; vectorized variants (AVX2+FMA on x86-64, NEON on AArch64) are
// picked once at runtime and must agree with the reference to rounding.

#include <cstddef>
#include <string_view>
#include <vector>

namespace rsfiqa::kernels {

struct KernelSet {
  std::string_view name;

  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // All gemm variants accumulate into row-major C (m x n); k is the
  // contraction extent.
  // C += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C += A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

const KernelSet& scalar_kernels() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelSet* avx2_kernels() noexcept;
const KernelSet* neon_kernels() noexcept;

// All sets usable on this machine, scalar first.
std::vector<const KernelSet*> available_kernels();

// The set used by tensor ops. Chosen on first use: the widest available,
// unless RSFIQA_KERNELS names another ("scalar", "avx2", "neon").
const KernelSet& active() noexcept;

// Returns false (and changes nothing) when the name is unavailable.
bool select(std::string_view name) noexcept;

}  // namespace rsfiqa::kernels
