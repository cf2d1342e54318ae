#include "rsfiqa/backbone.hpp"

#include "rsfiqa/error.hpp"

namespace rsfiqa {

ConvBackbone::ConvBackbone(std::vector<std::size_t> channels, ParameterSet& params,
                           std::mt19937_64& rng)
    : channels_(std::move(channels)) {
  if (channels_.size() < 2) fail(ErrorCode::InvalidConfig, "backbone needs at least two levels");
  std::size_t c_in = 3;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (channels_[i] == 0) fail(ErrorCode::InvalidConfig, "backbone channel counts must be positive");
    blocks_.push_back(ConvLayer::make(params, "backbone.block" + std::to_string(i + 1), 3, c_in,
                                      channels_[i], 2, true, rng));
    c_in = channels_[i];
  }
}

MultiLevelFeatures ConvBackbone::extract(const Var& image) const {
  if (image.shape().size() != 3 || image.shape()[2] != 3) {
    fail(ErrorCode::ShapeMismatch, "backbone expects H x W x 3, got " + shape_string(image.shape()));
  }
  const std::size_t factor = std::size_t{1} << blocks_.size();
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  if (h % factor != 0 || w % factor != 0) {
    fail(ErrorCode::IndivisibleInput, "input " + std::to_string(h) + "x" + std::to_string(w) +
                                          " is not divisible by 2^" + std::to_string(blocks_.size()));
  }
  MultiLevelFeatures out;
  Var x = image;
  for (const ConvLayer& block : blocks_) {
    x = ops::relu(block(x));
    out.levels.push_back(x);
  }
  return out;
}

}  // namespace rsfiqa
