#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rsfiqa/numerics/autodiff.hpp"

// Differentiable tensor ops. Broadcasting is limited to exact-shape pairs and
// scalar-with-tensor; anything else is a ShapeMismatch. Images and feature
// maps are rank-3 H x W x C; matrices are rank-2 rows x cols.
namespace rsfiqa::ops {

Var matmul(const Var& a, const Var& b);
// a (m x k) times b (n x k) transposed.
Var matmul_bt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

Var sigmoid(const Var& a);
Var relu(const Var& a);

// Max-subtracted softmax over one axis of any rank.
Var softmax(const Var& a, std::size_t axis);

Var sum(const Var& a);
Var mean(const Var& a);

// x (m x k) times w (k x p) plus optional bias (p); pass an undefined Var
// for no bias.
Var linear(const Var& x, const Var& w, const Var& bias);

// Cross-correlation of x (h x w x c_in) with weights (kh x kw x c_in x c_out)
// and optional bias (c_out). Output extents floor((h + 2p - k) / s) + 1.
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t padding);

// Evenly partitioned window means; requires out extents <= in extents.
Var adaptive_avg_pool(const Var& x, std::size_t out_h, std::size_t out_w);

// Half-pixel (align-corners-false) bilinear resampling, source coordinates
// clamped at the border.
Var bilinear_interp(const Var& x, std::size_t out_h, std::size_t out_w);

Var reshape(const Var& a, Shape shape);

// m x n -> 1 x n column means.
Var mean_rows(const Var& a);
// 1 x n -> m x n.
Var broadcast_rows(const Var& a, std::size_t rows);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
// Multiplies row r by the constant weights[r].
Var scale_rows(const Var& a, std::span<const double> weights);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);

// Looks up table rows (vocab x d) for ids; result has `rows` rows, with rows
// past ids.size() left at zero. ids longer than `rows` are truncated.
Var embedding(const Var& table, std::span<const std::size_t> ids, std::size_t rows);

// softmax(q k^T / sqrt(d_k) + bias) v. bias may be undefined.
Var scaled_attention(const Var& q, const Var& k, const Var& v, const Var& bias = Var());

}  // namespace rsfiqa::ops
