#include "rsfiqa/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

std::vector<std::size_t> pick_coordinates(const Tensor& grad, std::size_t budget,
                                          std::mt19937_64& rng) {
  std::vector<std::size_t> all(grad.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (grad.size() <= budget) return all;

  std::vector<std::size_t> nonzero;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (grad[i] != 0.0) nonzero.push_back(i);
  std::vector<std::size_t> picked;
  const std::size_t favoured = std::min(nonzero.size(), (budget * 3) / 4);
  std::shuffle(nonzero.begin(), nonzero.end(), rng);
  picked.assign(nonzero.begin(), nonzero.begin() + static_cast<std::ptrdiff_t>(favoured));
  std::shuffle(all.begin(), all.end(), rng);
  for (std::size_t i : all) {
    if (picked.size() >= budget) break;
    if (std::find(picked.begin(), picked.end(), i) == picked.end()) picked.push_back(i);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Var()>& loss,
                                  std::span<const NamedParameter> params,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "finite_diff_check: epsilon must be positive");
  for (const auto& p : params) {
    Var v = p.var;
    v.zero_grad();
  }
  backward(loss());

  GradCheckResult result;
  result.parameters = params.size();
  std::mt19937_64 rng(options.seed);
  NoGradGuard no_grad;
  for (const auto& p : params) {
    Var var = p.var;
    const Tensor grad = var.grad();
    for (std::size_t idx : pick_coordinates(grad, options.samples_per_parameter, rng)) {
      double& slot = var.mutable_value()[idx];
      const double saved = slot;
      slot = saved + options.epsilon;
      const double plus = loss().item();
      slot = saved - options.epsilon;
      const double minus = loss().item();
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double err = relative_error(grad[idx], numeric);
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = idx;
        result.worst_analytic = grad[idx];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace rsfiqa
