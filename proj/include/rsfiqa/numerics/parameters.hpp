#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rsfiqa/numerics/autodiff.hpp"

namespace rsfiqa {

struct NamedParameter {
  std::string name;
  Var var;
};

// Ordered, named collection of trainable tensors. Order is the registration
// order, which fixes checkpoint layout and optimizer state alignment.
class ParameterSet {
 public:
  Var add(std::string name, Tensor init);

  const std::vector<NamedParameter>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept;
  // Throws InvalidConfig when absent.
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grad();
  void append(const ParameterSet& other);

 private:
  std::vector<NamedParameter> entries_;
};

// Deterministic initializers drawn from a caller-owned engine.
Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);
Tensor zeros(Shape shape);

}  // namespace rsfiqa
