#include "rsfiqa/regressor.hpp"

#include <algorithm>

#include "rsfiqa/error.hpp"
#include "rsfiqa/mhf.hpp"

namespace rsfiqa {

QualityHead::QualityHead(const HeadConfig& config, ParameterSet& params, std::mt19937_64& rng)
    : config_(config),
      attn_(AttentionBlock::make(params, "head.self_attn", config.channels, config.channels, config.channels,
                                 config.heads, rng)),
      mlp1_(LinearLayer::make(params, "head.mlp1", config.channels, config.hidden, true, rng)),
      mlp2_(LinearLayer::make(params, "head.mlp2", config.hidden, 1, true, rng)) {}

Var QualityHead::pooled(const Var& features) const {
  if (features.shape().size() != 3 || features.shape()[2] != config_.channels) {
    fail(ErrorCode::ShapeMismatch, "quality head expects Hn x Wn x " + std::to_string(config_.channels));
  }
  const Var flat = flatten_spatial(features);
  return ops::mean_rows(ops::add(attn_(flat, flat), flat));
}

Var QualityHead::operator()(const Var& features) const {
  const Var hidden = ops::relu(mlp1_(pooled(features)));
  return ops::reshape(ops::sigmoid(mlp2_(hidden)), {1});
}

Var mse_loss(std::span<const Var> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                        std::to_string(targets.size()) + " targets");
  }
  if (preds.empty()) fail(ErrorCode::EmptyBatch, "empty batch");
  Var total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Var diff = ops::add_scalar(ops::reshape(preds[i], {1}), -targets[i]);
    const Var sq = ops::mul(diff, diff);
    total = total.defined() ? ops::add(total, sq) : sq;
  }
  return ops::scale(total, 1.0 / static_cast<double>(preds.size()));
}

double mse(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) fail(ErrorCode::LengthMismatch, "prediction and target counts differ");
  if (preds.empty()) fail(ErrorCode::EmptyBatch, "empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

MosNormalization fit_mos_normalization(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorCode::DegenerateRange, "need at least two MOS values to normalise");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) fail(ErrorCode::DegenerateRange, "all MOS values are equal");
  return {*lo, *hi};
}

std::vector<double> normalize_mos(std::span<const double> values) {
  const MosNormalization norm = fit_mos_normalization(values);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(norm.apply(v));
  return out;
}

}  // namespace rsfiqa
