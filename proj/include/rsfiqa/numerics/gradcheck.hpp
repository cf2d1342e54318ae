#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "rsfiqa/numerics/parameters.hpp"

namespace rsfiqa {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates sampled per parameter tensor; small tensors are checked in
  // full. Three quarters of the draws favour coordinates with a nonzero
  // analytic gradient so sparse parameters (embedding rows) are exercised.
  std::size_t samples_per_parameter = 8;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t parameters = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric) noexcept;

// Compares reverse-mode gradients of `loss` against central differences
// (f(θ+εe) - f(θ-εe)) / 2ε. `loss` must rebuild the scalar from the current
// parameter values on every call. Parameter grads are reset first.
GradCheckResult finite_diff_check(const std::function<Var()>& loss,
                                  std::span<const NamedParameter> params,
                                  const GradCheckOptions& options = {});

}  // namespace rsfiqa
