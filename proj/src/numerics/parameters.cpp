#include "rsfiqa/numerics/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

Var ParameterSet::add(std::string name, Tensor init) {
  if (contains(name)) fail(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
  Var v = Var::parameter(std::move(init));
  entries_.push_back({std::move(name), v});
  return v;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.size();
  return n;
}

const Var& ParameterSet::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.var;
  }
  fail(ErrorCode::InvalidConfig, "unknown parameter " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

void ParameterSet::append(const ParameterSet& other) {
  for (const auto& e : other.entries_) {
    if (contains(e.name)) fail(ErrorCode::InvalidConfig, "duplicate parameter name " + e.name);
    entries_.push_back(e);
  }
}

// Box-Muller over the raw engine output keeps draws identical across
// standard library implementations.
Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape), 0.0);
  auto uniform = [&rng] {
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  for (std::size_t i = 0; i < t.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 6.283185307179586 * uniform();
    t[i] = stddev * r * std::cos(theta);
    if (i + 1 < t.size()) t[i + 1] = stddev * r * std::sin(theta);
  }
  return t;
}

Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

}  // namespace rsfiqa
