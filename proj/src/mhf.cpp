#include "rsfiqa/mhf.hpp"

#include "rsfiqa/error.hpp"

namespace rsfiqa {

Var flatten_spatial(const Var& map) {
  const Shape& s = map.shape();
  if (s.size() != 3) fail(ErrorCode::ShapeMismatch, "expected an H x W x C map, got " + shape_string(s));
  return ops::reshape(map, {s[0] * s[1], s[2]});
}

Var unflatten_spatial(const Var& rows, std::size_t height, std::size_t width) {
  return ops::reshape(rows, {height, width, rows.shape().at(1)});
}

MultiScaleFusion::MultiScaleFusion(const MhfConfig& config, const FeatureExtractor& backbone,
                                   ParameterSet& params, std::mt19937_64& rng)
    : config_(config) {
  const std::size_t c = config_.channels;
  if (c < 2) fail(ErrorCode::InvalidConfig, "MHF channel count must be at least 2");
  const std::size_t mid = c / 2;
  for (std::size_t i = 0; i < backbone.level_count(); ++i) {
    const std::size_t ci = backbone.channels(i);
    const std::string name = "mhf.level" + std::to_string(i + 1);
    level_channels_.push_back(ci);
    levels_.push_back(Level{
        ConvLayer::make(params, name + ".phi.reduce", 1, ci, mid, 1, true, rng),
        ConvLayer::make(params, name + ".phi.spatial", 3, mid, mid, 1, true, rng),
        ConvLayer::make(params, name + ".phi.expand", 1, mid, c, 1, true, rng),
        ConvLayer::make(params, name + ".gate", 1, ci, c, 1, false, rng),
        ConvLayer::make(params, name + ".post", 3, c, c, 1, true, rng),
        AttentionBlock::make(params, name + ".self_attn", c, c, c, config_.heads, rng),
    });
  }
  for (std::size_t i = 0; i + 1 < backbone.level_count(); ++i) {
    cross_.push_back(AttentionBlock::make(params, "mhf.cross" + std::to_string(i + 1), c, c, c,
                                          config_.heads, rng));
  }
}

Var MultiScaleFusion::gated_downsample(const Var& feature, std::size_t level, std::size_t target_h,
                                       std::size_t target_w) const {
  const Level& lv = levels_.at(level);
  const Shape& s = feature.shape();
  if (s.size() != 3 || s[2] != level_channels_[level]) {
    fail(ErrorCode::ShapeMismatch, "level " + std::to_string(level + 1) + " feature has shape " +
                                       shape_string(s));
  }
  if (s[0] < target_h || s[1] < target_w) {
    fail(ErrorCode::ShapeMismatch, "feature " + shape_string(s) + " is smaller than the pooling target");
  }
  Var mask = ops::sigmoid(lv.expand(ops::relu(lv.spatial(ops::relu(lv.reduce(feature))))));
  Var gated = ops::mul(mask, lv.gate(feature));
  Var pooled = ops::adaptive_avg_pool(gated, target_h, target_w);
  return ops::sigmoid(lv.post(pooled));
}

Var MultiScaleFusion::self_enhance(const Var& downsampled, std::size_t level) const {
  const Shape& s = downsampled.shape();
  if (s.size() != 3 || s[2] != config_.channels) {
    fail(ErrorCode::ShapeMismatch, "self_enhance expects H_n x W_n x C, got " + shape_string(s));
  }
  Var rows = flatten_spatial(downsampled);
  Var out = ops::add(levels_.at(level).self_attention(rows, rows), rows);
  return unflatten_spatial(out, s[0], s[1]);
}

Var MultiScaleFusion::cross_fuse(const std::vector<Var>& enhanced) const {
  if (enhanced.empty()) fail(ErrorCode::EmptyInput, "cross_fuse needs at least one level");
  if (enhanced.size() > levels_.size()) fail(ErrorCode::ShapeMismatch, "more levels than the fusion was built for");
  const Shape& s = enhanced.back().shape();
  for (const Var& e : enhanced) {
    if (e.shape() != s) fail(ErrorCode::ShapeMismatch, "cross_fuse inputs must share extents");
  }
  Var carry = flatten_spatial(enhanced.back());
  for (std::size_t i = enhanced.size() - 1; i-- > 0;) {
    Var current = flatten_spatial(enhanced[i]);
    carry = ops::add(cross_[i](carry, current), carry);
  }
  return unflatten_spatial(carry, s[0], s[1]);
}

FusedFeatureMaps MultiScaleFusion::forward(const MultiLevelFeatures& features) const {
  if (features.size() != levels_.size()) {
    fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(levels_.size()) + " feature levels");
  }
  const std::size_t th = features.top().shape()[0], tw = features.top().shape()[1];
  FusedFeatureMaps out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.downsampled.push_back(gated_downsample(features.levels[i], i, th, tw));
    out.enhanced.push_back(self_enhance(out.downsampled.back(), i));
  }
  out.fused = cross_fuse(out.enhanced);
  return out;
}

}  // namespace rsfiqa
