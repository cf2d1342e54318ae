#pragma once

#include <memory>
#include <random>
#include <vector>

#include "rsfiqa/layers.hpp"

namespace rsfiqa {

// Level i (1-based) has extents H / 2^i x W / 2^i x C_i.
struct MultiLevelFeatures {
  std::vector<Var> levels;

  std::size_t size() const noexcept { return levels.size(); }
  const Var& top() const { return levels.back(); }
};

// Anything that turns an image into a halving-resolution feature pyramid.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t level_count() const = 0;
  virtual std::size_t channels(std::size_t level) const = 0;
  // image: H x W x 3. Throws IndivisibleInput unless H and W are divisible
  // by 2^level_count().
  virtual MultiLevelFeatures extract(const Var& image) const = 0;
};

// n stride-2 blocks of 3x3 conv -> relu.
class ConvBackbone final : public FeatureExtractor {
 public:
  // Channel schedule C_1..C_n; needs n >= 2 and every entry positive.
  ConvBackbone(std::vector<std::size_t> channels, ParameterSet& params, std::mt19937_64& rng);

  std::size_t level_count() const override { return blocks_.size(); }
  std::size_t channels(std::size_t level) const override { return channels_.at(level); }
  MultiLevelFeatures extract(const Var& image) const override;

 private:
  std::vector<std::size_t> channels_;
  std::vector<ConvLayer> blocks_;
};

}  // namespace rsfiqa
