#include "rsfiqa/layers.hpp"

#include <cmath>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

ConvLayer ConvLayer::make(ParameterSet& params, const std::string& name, std::size_t kernel,
                          std::size_t c_in, std::size_t c_out, std::size_t stride, bool with_bias,
                          std::mt19937_64& rng) {
  ConvLayer layer;
  const double stddev = std::sqrt(2.0 / static_cast<double>(kernel * kernel * c_in));
  layer.weight = params.add(name + ".weight", normal_tensor({kernel, kernel, c_in, c_out}, stddev, rng));
  // Slightly positive so relu inputs fed by dead (all-zero) regions do not
  // start exactly on the kink.
  if (with_bias) layer.bias = params.add(name + ".bias", Tensor({c_out}, 0.01));
  layer.stride = stride;
  layer.padding = kernel / 2;
  return layer;
}

LinearLayer LinearLayer::make(ParameterSet& params, const std::string& name, std::size_t in,
                              std::size_t out, bool with_bias, std::mt19937_64& rng) {
  LinearLayer layer;
  layer.weight = params.add(name + ".weight", normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (with_bias) layer.bias = params.add(name + ".bias", zeros({out}));
  return layer;
}

AttentionBlock AttentionBlock::make(ParameterSet& params, const std::string& name, std::size_t query_in,
                                    std::size_t kv_in, std::size_t model_dim, std::size_t heads,
                                    std::mt19937_64& rng) {
  if (heads == 0 || model_dim % heads != 0) {
    fail(ErrorCode::InvalidConfig, name + ": head count must divide the model dimension");
  }
  AttentionBlock block;
  block.query = LinearLayer::make(params, name + ".q", query_in, model_dim, true, rng);
  block.key = LinearLayer::make(params, name + ".k", kv_in, model_dim, true, rng);
  block.value = LinearLayer::make(params, name + ".v", kv_in, model_dim, true, rng);
  block.heads = heads;
  return block;
}

Var AttentionBlock::operator()(const Var& query_src, const Var& kv_src, const Var& bias) const {
  Var q = query(query_src);
  Var k = key(kv_src);
  Var v = value(kv_src);
  if (heads == 1) return ops::scaled_attention(q, k, v, bias);
  const std::size_t width = q.shape()[1] / heads;
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * width, hi = lo + width;
    outs.push_back(ops::scaled_attention(ops::slice_cols(q, lo, hi), ops::slice_cols(k, lo, hi),
                                         ops::slice_cols(v, lo, hi), bias));
  }
  return ops::concat_cols(outs);
}

}  // namespace rsfiqa
