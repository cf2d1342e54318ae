#pragma once

#include <random>
#include <span>
#include <vector>

#include "rsfiqa/layers.hpp"

namespace rsfiqa {

struct HeadConfig {
  std::size_t channels = 32;  // C
  std::size_t hidden = 64;
  std::size_t heads = 1;
};

// sigmoid(MLP(mean over positions of (SelfAttn(R) + R))). Parameters live
// under "head.": self_attn.{q,k,v}, mlp1, mlp2.
class QualityHead {
 public:
  QualityHead(const HeadConfig& config, ParameterSet& params, std::mt19937_64& rng);

  // R: Hn x Wn x C -> 1 x C.
  Var pooled(const Var& features) const;
  // Score in (0, 1), shape {1}.
  Var operator()(const Var& features) const;

 private:
  HeadConfig config_;
  AttentionBlock attn_;
  LinearLayer mlp1_;
  LinearLayer mlp2_;
};

// (1/N) sum (pred_i - target_i)^2 with preds of shape {1} each.
// LengthMismatch, EmptyBatch.
Var mse_loss(std::span<const Var> preds, std::span<const double> targets);
double mse(std::span<const double> preds, std::span<const double> targets);

struct MosNormalization {
  double lo = 0.0;
  double hi = 1.0;

  double apply(double mos) const { return (mos - lo) / (hi - lo); }
  double invert(double unit) const { return lo + unit * (hi - lo); }
};

// Min and max of the given (training) values. DegenerateRange when fewer
// than two values or all equal.
MosNormalization fit_mos_normalization(std::span<const double> values);
std::vector<double> normalize_mos(std::span<const double> values);

}  // namespace rsfiqa
