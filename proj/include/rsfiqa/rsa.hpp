#pragma once

#include <random>
#include <span>
#include <vector>

#include "rsfiqa/layers.hpp"
#include "rsfiqa/semantic_encoder.hpp"

namespace rsfiqa {

struct RsaConfig {
  std::size_t guide_channels = 16;    // C_G
  std::size_t text_dim = 32;          // d
  std::size_t feature_channels = 32;  // C of the fused map
  std::size_t heads = 1;
  double lambda_init = 0.1;
};

// Region-aware semantic attention. Parameters live under "rsa.":
//   pixel_proj.weight  3 x C_G, no bias, so projections vanish off-region
//   text_proj.weight   d x C_G, no bias
//   lambda             1, kept >= 0 by the optimiser
//   attn.{q,k,v}       projections of the fused map
class RegionSemanticAttention {
 public:
  RegionSemanticAttention(const RsaConfig& config, ParameterSet& params, std::mt19937_64& rng);

  // G = M (a + P): P is the per-pixel projection of M * I, a attends from the
  // pooled projected text query over the region's projected pixels.
  // image: H x W x 3, indicator: H*W values in {0, 1}. Returns H x W x C_G.
  Var region_guided_repr(const TextEmbedding& text, std::span<const double> indicator, const Var& image) const;

  // Bilinear resize to rows x cols, flattened to (rows*cols) x C_G.
  // TargetMismatch unless rows * cols == expected_rows.
  Var resample_repr(const Var& guided, std::size_t rows, std::size_t cols, std::size_t expected_rows) const;

  // B = lambda * sum_i G_i' G_i'^T.
  Var attention_bias(std::span<const Var> resampled) const;

  // softmax(Q K^T / sqrt(d_k) + B) V over the flattened fused map; bias may
  // be undefined. fused: Hn x Wn x C -> Hn x Wn x C.
  Var attend(const Var& fused, const Var& bias) const;

  const Var& lambda() const { return lambda_; }
  const RsaConfig& config() const { return config_; }

 private:
  RsaConfig config_;
  Var pixel_proj_;
  Var text_proj_;
  Var lambda_;
  AttentionBlock attn_;
};

}  // namespace rsfiqa
