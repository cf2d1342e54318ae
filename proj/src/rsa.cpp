#include "rsfiqa/rsa.hpp"

#include <cmath>
#include <numeric>

#include "rsfiqa/error.hpp"
#include "rsfiqa/mhf.hpp"

namespace rsfiqa {

RegionSemanticAttention::RegionSemanticAttention(const RsaConfig& config, ParameterSet& params,
                                                 std::mt19937_64& rng)
    : config_(config) {
  if (config_.guide_channels == 0) fail(ErrorCode::InvalidConfig, "C_G must be positive");
  pixel_proj_ = LinearLayer::make(params, "rsa.pixel_proj", 3, config_.guide_channels, false, rng).weight;
  text_proj_ = LinearLayer::make(params, "rsa.text_proj", config_.text_dim, config_.guide_channels, false, rng).weight;
  lambda_ = params.add("rsa.lambda", Tensor::scalar(config_.lambda_init));
  attn_ = AttentionBlock::make(params, "rsa.attn", config_.feature_channels, config_.feature_channels,
                               config_.feature_channels, config_.heads, rng);
}

Var RegionSemanticAttention::region_guided_repr(const TextEmbedding& text, std::span<const double> indicator,
                                                const Var& image) const {
  if (image.shape().size() != 3 || image.shape()[2] != 3) fail(ErrorCode::ShapeMismatch, "RSA expects an H x W x 3 image");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  if (indicator.size() != h * w) fail(ErrorCode::ShapeMismatch, "region indicator does not match the image");
  if (text.valid_count == 0) fail(ErrorCode::EmptyText, "region description has no tokens");
  std::vector<std::size_t> region;
  for (std::size_t p = 0; p < indicator.size(); ++p)
    if (indicator[p] != 0.0) region.push_back(p);
  if (region.empty()) fail(ErrorCode::EmptyRegion, "region has no pixels");

  const Var masked = ops::scale_rows(ops::reshape(image, {h * w, 3}), indicator);
  const Var projected = ops::matmul(masked, pixel_proj_);  // HW x C_G

  std::vector<std::size_t> valid(text.valid_count);
  std::iota(valid.begin(), valid.end(), std::size_t{0});
  const Var query = ops::matmul(ops::mean_rows(ops::gather_rows(text.tokens, valid)), text_proj_);  // 1 x C_G
  const Var keys = ops::gather_rows(projected, region);
  const Var attended = ops::scaled_attention(query, keys, keys);  // 1 x C_G

  const Var guided = ops::scale_rows(ops::add(ops::broadcast_rows(attended, h * w), projected), indicator);
  return ops::reshape(guided, {h, w, config_.guide_channels});
}

Var RegionSemanticAttention::resample_repr(const Var& guided, std::size_t rows, std::size_t cols,
                                           std::size_t expected_rows) const {
  if (rows * cols != expected_rows) {
    fail(ErrorCode::TargetMismatch, "resample target " + std::to_string(rows) + "x" + std::to_string(cols) +
                                        " does not give " + std::to_string(expected_rows) + " rows");
  }
  const Var resized = (guided.shape()[0] == rows && guided.shape()[1] == cols)
                          ? guided
                          : ops::bilinear_interp(guided, rows, cols);
  return ops::reshape(resized, {rows * cols, guided.shape()[2]});
}

Var RegionSemanticAttention::attention_bias(std::span<const Var> resampled) const {
  if (resampled.empty()) fail(ErrorCode::EmptyInput, "attention bias needs at least one region");
  Var gram;
  for (const Var& g : resampled) {
    if (g.shape() != resampled.front().shape()) fail(ErrorCode::ShapeMismatch, "region representations differ in shape");
    const Var term = ops::matmul_bt(g, g);
    gram = gram.defined() ? ops::add(gram, term) : term;
  }
  return ops::mul(gram, lambda_);
}

Var RegionSemanticAttention::attend(const Var& fused, const Var& bias) const {
  if (fused.shape().size() != 3) fail(ErrorCode::ShapeMismatch, "RSA expects an Hn x Wn x C map");
  const std::size_t rows = fused.shape()[0] * fused.shape()[1];
  if (bias.defined() && bias.shape() != Shape{rows, rows}) {
    fail(ErrorCode::ShapeMismatch, "attention bias does not match the fused map");
  }
  const Var flat = flatten_spatial(fused);
  return unflatten_spatial(attn_(flat, flat, bias), fused.shape()[0], fused.shape()[1]);
}

}  // namespace rsfiqa
