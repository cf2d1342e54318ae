#pragma once

#include <random>
#include <vector>

#include "rsfiqa/backbone.hpp"
#include "rsfiqa/layers.hpp"

namespace rsfiqa {

// Every map is H_n x W_n x C.
struct FusedFeatureMaps {
  std::vector<Var> downsampled;  // D_i, entries in (0, 1)
  std::vector<Var> enhanced;     // D_i'
  Var fused;                     // D_1''
};

struct MhfConfig {
  std::size_t channels = 32;  // reduced dimension C
  std::size_t heads = 1;
};

// Multi-scale hierarchical fusion: gated-convolution downsampling of each
// pyramid level to the top resolution, per-level self-attention, then a
// top-down cross-attention cascade. Projections are per level.
class MultiScaleFusion {
 public:
  MultiScaleFusion(const MhfConfig& config, const FeatureExtractor& backbone, ParameterSet& params,
                   std::mt19937_64& rng);

  std::size_t level_count() const noexcept { return levels_.size(); }
  std::size_t channels() const noexcept { return config_.channels; }

  // D_i = σ(Conv(Pool(σ(φ_i(F_i)) · (W_f F_i)))), level is 0-based. The pool
  // target is target_h x target_w (the top level's extents).
  Var gated_downsample(const Var& feature, std::size_t level, std::size_t target_h,
                       std::size_t target_w) const;
  // D_i' = Attn(D_i, D_i, D_i) + D_i.
  Var self_enhance(const Var& downsampled, std::size_t level) const;
  // D_n'' = D_n'; D_i'' = Attn(D_{i+1}'', D_i', D_i') + D_{i+1}''. Returns D_1''.
  Var cross_fuse(const std::vector<Var>& enhanced) const;

  FusedFeatureMaps forward(const MultiLevelFeatures& features) const;

 private:
  struct Level {
    ConvLayer reduce;   // 1x1, C_i -> C/2
    ConvLayer spatial;  // 3x3, C/2 -> C/2
    ConvLayer expand;   // 1x1, C/2 -> C
    ConvLayer gate;     // W_f, 1x1, C_i -> C
    ConvLayer post;     // 3x3 after pooling, C -> C
    AttentionBlock self_attention;
  };

  MhfConfig config_;
  std::vector<std::size_t> level_channels_;
  std::vector<Level> levels_;
  // cross_[i] fuses level i (0-based) with the cascade from level i + 1.
  std::vector<AttentionBlock> cross_;
};

// Row-major flatten of H x W x C into (H*W) x C, and back.
Var flatten_spatial(const Var& map);
Var unflatten_spatial(const Var& rows, std::size_t height, std::size_t width);

}  // namespace rsfiqa
