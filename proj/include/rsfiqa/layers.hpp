#pragma once

#include <random>
#include <string>

#include "rsfiqa/numerics/ops.hpp"
#include "rsfiqa/numerics/parameters.hpp"

namespace rsfiqa {

struct ConvLayer {
  Var weight;  // kh x kw x c_in x c_out
  Var bias;    // c_out, undefined when the layer has none
  std::size_t stride = 1;
  std::size_t padding = 0;

  // He-normal weights, bias 0.01.
  static ConvLayer make(ParameterSet& params, const std::string& name, std::size_t kernel,
                        std::size_t c_in, std::size_t c_out, std::size_t stride, bool with_bias,
                        std::mt19937_64& rng);

  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, padding); }
};

struct LinearLayer {
  Var weight;  // in x out
  Var bias;    // out

  static LinearLayer make(ParameterSet& params, const std::string& name, std::size_t in,
                          std::size_t out, bool with_bias, std::mt19937_64& rng);

  Var operator()(const Var& x) const { return ops::linear(x, weight, bias); }
};

// Linear Q/K/V projections followed by scaled dot-product attention. With
// more than one head the projected columns are split evenly, attended
// separately (each head sees the same additive bias) and concatenated.
struct AttentionBlock {
  LinearLayer query;
  LinearLayer key;
  LinearLayer value;
  std::size_t heads = 1;

  static AttentionBlock make(ParameterSet& params, const std::string& name, std::size_t query_in,
                             std::size_t kv_in, std::size_t model_dim, std::size_t heads,
                             std::mt19937_64& rng);

  // query_src: a x query_in, kv_src: b x kv_in -> a x model_dim.
  Var operator()(const Var& query_src, const Var& kv_src, const Var& bias = Var()) const;
};

}  // namespace rsfiqa
