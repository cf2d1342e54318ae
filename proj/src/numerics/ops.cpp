#include "rsfiqa/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rsfiqa/error.hpp"
#include "rsfiqa/numerics/kernels.hpp"

namespace rsfiqa::ops {
namespace {

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) +
                                       ", got " + shape_string(a.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorCode::ShapeMismatch,
       std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

enum class Broadcast { Same, LeftScalar, RightScalar };

Broadcast broadcast_kind(const Var& a, const Var& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  // both single-element: keep the higher-rank shape
  if (a.size() == 1 && b.size() == 1) return a.shape().size() >= b.shape().size() ? Broadcast::RightScalar : Broadcast::LeftScalar;
  if (a.size() == 1) return Broadcast::LeftScalar;
  if (b.size() == 1) return Broadcast::RightScalar;
  mismatch(op, a.shape(), b.shape());
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Indices of the two source samples and the weight of the second, for
// half-pixel bilinear resampling along one axis.
struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
  if (b.shape()[0] != k) mismatch("matmul", a.shape(), b.shape());
  Tensor out({m, p}, 0.0);
  kernels::active().gemm_nn(m, p, k, a.value().ptr(), b.value().ptr(), out.ptr());
  return make_op("matmul", std::move(out), {a, b},
                 [a, b, m, k, p](const Tensor& g, std::span<Tensor* const> grads) {
                   const auto& kn = kernels::active();
                   if (grads[0]) kn.gemm_nt(m, k, p, g.ptr(), b.value().ptr(), grads[0]->ptr());
                   if (grads[1]) kn.gemm_tn(k, p, m, a.value().ptr(), g.ptr(), grads[1]->ptr());
                 });
}

Var matmul_bt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_bt");
  require_rank(b, 2, "matmul_bt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) mismatch("matmul_bt", a.shape(), b.shape());
  Tensor out({m, n}, 0.0);
  kernels::active().gemm_nt(m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
  return make_op("matmul_bt", std::move(out), {a, b},
                 [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
                   const auto& kn = kernels::active();
                   if (grads[0]) kn.gemm_nn(m, k, n, g.ptr(), b.value().ptr(), grads[0]->ptr());
                   if (grads[1]) kn.gemm_tn(n, k, m, g.ptr(), a.value().ptr(), grads[1]->ptr());
                 });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.value().at(i, j);
  return make_op("transpose", std::move(out), {a},
                 [m, n](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) grads[0]->at(i, j) += g.at(j, i);
                 });
}

Var add(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a, b, "add");
  const Var& big = kind == Broadcast::LeftScalar ? b : a;
  Tensor out = big.value();
  if (kind == Broadcast::Same) {
    kernels::active().axpy(1.0, b.value().ptr(), out.ptr(), out.size());
  } else {
    const double s = (kind == Broadcast::LeftScalar ? a : b).value()[0];
    for (double& v : out.data()) v += s;
  }
  return make_op("add", std::move(out), {a, b},
                 [kind](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t side = 0; side < 2; ++side) {
                     Tensor* dst = grads[side];
                     if (!dst) continue;
                     const bool reduced = (side == 0 && kind == Broadcast::LeftScalar) ||
                                          (side == 1 && kind == Broadcast::RightScalar);
                     if (reduced) {
                       double s = 0.0;
                       for (double v : g.data()) s += v;
                       (*dst)[0] += s;
                     } else {
                       kernels::active().axpy(1.0, g.ptr(), dst->ptr(), g.size());
                     }
                   }
                 });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a, b, "mul");
  Tensor out(kind == Broadcast::LeftScalar ? b.shape() : a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = kind == Broadcast::LeftScalar ? av[0] : av[i];
    const double y = kind == Broadcast::RightScalar ? bv[0] : bv[i];
    out[i] = x * y;
  }
  return make_op("mul", std::move(out), {a, b},
                 [a, b, kind](const Tensor& g, std::span<Tensor* const> grads) {
                   const auto& av = a.value();
                   const auto& bv = b.value();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const std::size_t ia = kind == Broadcast::LeftScalar ? 0 : i;
                     const std::size_t ib = kind == Broadcast::RightScalar ? 0 : i;
                     if (grads[0]) (*grads[0])[ia] += g[i] * bv[ib];
                     if (grads[1]) (*grads[1])[ib] += g[i] * av[ia];
                   }
                 });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return make_op("scale", std::move(out), {a},
                 [factor](const Tensor& g, std::span<Tensor* const> grads) {
                   kernels::active().axpy(factor, g.ptr(), grads[0]->ptr(), g.size());
                 });
}

Var add_scalar(const Var& a, double offset) {
  Tensor out = a.value();
  for (double& v : out.data()) v += offset;
  return make_op("add_scalar", std::move(out), {a},
                 [](const Tensor& g, std::span<Tensor* const> grads) {
                   kernels::active().axpy(1.0, g.ptr(), grads[0]->ptr(), g.size());
                 });
}

Var sigmoid(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(a.value()[i]);
  Tensor saved = out;
  return make_op("sigmoid", std::move(out), {a},
                 [y = std::move(saved)](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < g.size(); ++i)
                     (*grads[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                 });
}

Var relu(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.value()[i]);
  return make_op("relu", std::move(out), {a},
                 [a](const Tensor& g, std::span<Tensor* const> grads) {
                   const auto& x = a.value();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (x[i] > 0.0) (*grads[0])[i] += g[i];
                 });
}

Var softmax(const Var& a, std::size_t axis) {
  const Shape& shape = a.shape();
  if (axis >= shape.size()) {
    fail(ErrorCode::InvalidAxis,
         "softmax axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[axis];

  Tensor out(shape);
  const auto& x = a.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = x[base];
      for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double e = std::exp(x[base + t * inner] - mx);
        out[base + t * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t t = 0; t < len; ++t) out[base + t * inner] *= inv;
    }
  }
  Tensor saved = out;
  return make_op("softmax", std::move(out), {a},
                 [y = std::move(saved), outer, inner, len](const Tensor& g,
                                                          std::span<Tensor* const> grads) {
                   Tensor& dx = *grads[0];
                   for (std::size_t o = 0; o < outer; ++o) {
                     for (std::size_t in = 0; in < inner; ++in) {
                       const std::size_t base = o * len * inner + in;
                       double dotv = 0.0;
                       for (std::size_t t = 0; t < len; ++t)
                         dotv += g[base + t * inner] * y[base + t * inner];
                       for (std::size_t t = 0; t < len; ++t) {
                         const std::size_t idx = base + t * inner;
                         dx[idx] += y[idx] * (g[idx] - dotv);
                       }
                     }
                   }
                 });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_op("sum", Tensor::scalar(s), {a},
                 [](const Tensor& g, std::span<Tensor* const> grads) {
                   for (double& v : grads[0]->data()) v += g[0];
                 });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var linear(const Var& x, const Var& w, const Var& bias) {
  Var y = matmul(x, w);
  if (!bias.defined()) return y;
  const std::size_t m = y.shape()[0], p = y.shape()[1];
  if (bias.size() != p) mismatch("linear bias", bias.shape(), y.shape());
  Tensor out = y.value();
  for (std::size_t i = 0; i < m; ++i)
    kernels::active().axpy(1.0, bias.value().ptr(), out.ptr() + i * p, p);
  return make_op("linear_bias", std::move(out), {y, bias},
                 [m, p](const Tensor& g, std::span<Tensor* const> grads) {
                   if (grads[0]) kernels::active().axpy(1.0, g.ptr(), grads[0]->ptr(), g.size());
                   if (grads[1]) {
                     for (std::size_t i = 0; i < m; ++i)
                       kernels::active().axpy(1.0, g.ptr() + i * p, grads[1]->ptr(), p);
                   }
                 });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t padding) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t h = x.shape()[0], w = x.shape()[1], cin = x.shape()[2];
  const std::size_t kh = weight.shape()[0], kw = weight.shape()[1];
  const std::size_t cout = weight.shape()[3];
  if (weight.shape()[2] != cin) mismatch("conv2d", x.shape(), weight.shape());
  if (stride == 0) fail(ErrorCode::ShapeMismatch, "conv2d: stride must be positive");
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    fail(ErrorCode::ShapeMismatch, "conv2d: kernel " + shape_string(weight.shape()) +
                                       " exceeds padded input " + shape_string(x.shape()));
  }
  if (bias.defined() && bias.size() != cout) mismatch("conv2d bias", bias.shape(), weight.shape());
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  const std::size_t patch = kh * kw * cin;
  const std::size_t positions = oh * ow;

  // im2col: one row per output position, columns ordered (ky, kx, c).
  Tensor cols({positions, patch}, 0.0);
  const auto& xv = x.value();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* row = cols.ptr() + (oy * ow + ox) * patch;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = xv.ptr() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          std::copy(src, src + cin, row + (ky * kw + kx) * cin);
        }
      }
    }
  }
  Tensor out({oh, ow, cout}, 0.0);
  kernels::active().gemm_nn(positions, cout, patch, cols.ptr(), weight.value().ptr(), out.ptr());
  if (bias.defined()) {
    for (std::size_t p = 0; p < positions; ++p)
      kernels::active().axpy(1.0, bias.value().ptr(), out.ptr() + p * cout, cout);
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      "conv2d", std::move(out), std::move(inputs),
      [cols = std::move(cols), weight, h, w, cin, kh, kw, cout, oh, ow, stride, padding, patch,
       positions](const Tensor& g, std::span<Tensor* const> grads) {
        const auto& kn = kernels::active();
        if (grads[1]) kn.gemm_tn(patch, cout, positions, cols.ptr(), g.ptr(), grads[1]->ptr());
        if (grads.size() > 2 && grads[2]) {
          for (std::size_t p = 0; p < positions; ++p)
            kn.axpy(1.0, g.ptr() + p * cout, grads[2]->ptr(), cout);
        }
        if (!grads[0]) return;
        Tensor dcols({positions, patch}, 0.0);
        kn.gemm_nt(positions, patch, cout, g.ptr(), weight.value().ptr(), dcols.ptr());
        Tensor& dx = *grads[0];
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* row = dcols.ptr() + (oy * ow + ox) * patch;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                double* dst = dx.ptr() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                kn.axpy(1.0, row + (ky * kw + kx) * cin, dst, cin);
              }
            }
          }
        }
      });
}

Var adaptive_avg_pool(const Var& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "adaptive_avg_pool");
  const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
    fail(ErrorCode::InvalidTarget, "adaptive_avg_pool: target " + std::to_string(out_h) + "x" +
                                       std::to_string(out_w) + " invalid for input " +
                                       shape_string(x.shape()));
  }
  auto window = [](std::size_t i, std::size_t in, std::size_t out) {
    const std::size_t lo = (i * in) / out;
    const std::size_t hi = ((i + 1) * in + out - 1) / out;
    return std::pair{lo, hi};
  };
  Tensor out({out_h, out_w, c}, 0.0);
  const auto& xv = x.value();
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const auto [y0, y1] = window(oy, h, out_h);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const auto [x0, x1] = window(ox, w, out_w);
      const double inv = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      double* dst = out.ptr() + (oy * out_w + ox) * c;
      for (std::size_t iy = y0; iy < y1; ++iy)
        for (std::size_t ix = x0; ix < x1; ++ix)
          kernels::active().axpy(inv, xv.ptr() + (iy * w + ix) * c, dst, c);
    }
  }
  return make_op("adaptive_avg_pool", std::move(out), {x},
                 [h, w, c, out_h, out_w, window](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t oy = 0; oy < out_h; ++oy) {
                     const auto [y0, y1] = window(oy, h, out_h);
                     for (std::size_t ox = 0; ox < out_w; ++ox) {
                       const auto [x0, x1] = window(ox, w, out_w);
                       const double inv = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
                       const double* src = g.ptr() + (oy * out_w + ox) * c;
                       for (std::size_t iy = y0; iy < y1; ++iy)
                         for (std::size_t ix = x0; ix < x1; ++ix)
                           kernels::active().axpy(inv, src, grads[0]->ptr() + (iy * w + ix) * c, c);
                     }
                   }
                 });
}

Var bilinear_interp(const Var& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "bilinear_interp");
  if (out_h == 0 || out_w == 0) {
    fail(ErrorCode::InvalidTarget, "bilinear_interp: target extents must be at least 1");
  }
  const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor out({out_h, out_w, c}, 0.0);
  const auto& xv = x.value();
  // Nested lerps keep constant neighbourhoods exactly constant.
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const Tap& a = ty[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const Tap& b = tx[ox];
      const double* p00 = xv.ptr() + (a.lo * w + b.lo) * c;
      const double* p01 = xv.ptr() + (a.lo * w + b.hi) * c;
      const double* p10 = xv.ptr() + (a.hi * w + b.lo) * c;
      const double* p11 = xv.ptr() + (a.hi * w + b.hi) * c;
      double* dst = out.ptr() + (oy * out_w + ox) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = p00[ch] + b.frac * (p01[ch] - p00[ch]);
        const double bottom = p10[ch] + b.frac * (p11[ch] - p10[ch]);
        dst[ch] = top + a.frac * (bottom - top);
      }
    }
  }
  return make_op("bilinear_interp", std::move(out), {x},
                 [ty, tx, w, c, out_h, out_w](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t oy = 0; oy < out_h; ++oy) {
                     const Tap& a = ty[oy];
                     for (std::size_t ox = 0; ox < out_w; ++ox) {
                       const Tap& b = tx[ox];
                       const double* src = g.ptr() + (oy * out_w + ox) * c;
                       const std::pair<std::size_t, double> corners[4] = {
                           {(a.lo * w + b.lo) * c, (1.0 - a.frac) * (1.0 - b.frac)},
                           {(a.lo * w + b.hi) * c, (1.0 - a.frac) * b.frac},
                           {(a.hi * w + b.lo) * c, a.frac * (1.0 - b.frac)},
                           {(a.hi * w + b.hi) * c, a.frac * b.frac}};
                       for (const auto& [i, wt] : corners)
                         if (wt != 0.0) kernels::active().axpy(wt, src, grads[0]->ptr() + i, c);
                     }
                   }
                 });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op("reshape", std::move(out), {a},
                 [](const Tensor& g, std::span<Tensor* const> grads) {
                   kernels::active().axpy(1.0, g.ptr(), grads[0]->ptr(), g.size());
                 });
}

Var mean_rows(const Var& a) {
  require_rank(a, 2, "mean_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const double inv = 1.0 / static_cast<double>(m);
  Tensor out({1, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(inv, a.value().ptr() + i * n, out.ptr(), n);
  return make_op("mean_rows", std::move(out), {a},
                 [m, n, inv](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < m; ++i)
                     kernels::active().axpy(inv, g.ptr(), grads[0]->ptr() + i * n, n);
                 });
}

Var broadcast_rows(const Var& a, std::size_t rows) {
  require_rank(a, 2, "broadcast_rows");
  if (a.shape()[0] != 1 || rows == 0) {
    fail(ErrorCode::ShapeMismatch, "broadcast_rows: expected a single row, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.shape()[1];
  Tensor out({rows, n});
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(a.value().ptr(), n, out.ptr() + i * n);
  return make_op("broadcast_rows", std::move(out), {a},
                 [rows, n](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < rows; ++i)
                     kernels::active().axpy(1.0, g.ptr() + i * n, grads[0]->ptr(), n);
                 });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "gather_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (rows.empty()) fail(ErrorCode::ShapeMismatch, "gather_rows: empty row list");
  for (std::size_t r : rows) {
    if (r >= m) fail(ErrorCode::ShapeMismatch, "gather_rows: row " + std::to_string(r) + " out of range");
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  Tensor out({index.size(), n});
  for (std::size_t i = 0; i < index.size(); ++i)
    std::copy_n(a.value().ptr() + index[i] * n, n, out.ptr() + i * n);
  return make_op("gather_rows", std::move(out), {a},
                 [index = std::move(index), n](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < index.size(); ++i)
                     kernels::active().axpy(1.0, g.ptr() + i * n, grads[0]->ptr() + index[i] * n, n);
                 });
}

Var scale_rows(const Var& a, std::span<const double> weights) {
  require_rank(a, 2, "scale_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (weights.size() != m) {
    fail(ErrorCode::ShapeMismatch, "scale_rows: " + std::to_string(weights.size()) +
                                       " weights for " + std::to_string(m) + " rows");
  }
  std::vector<double> wts(weights.begin(), weights.end());
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= wts[i];
  return make_op("scale_rows", std::move(out), {a},
                 [wts = std::move(wts), n](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < wts.size(); ++i)
                     if (wts[i] != 0.0) kernels::active().axpy(wts[i], g.ptr() + i * n, grads[0]->ptr() + i * n, n);
                 });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (begin >= end || end > n) fail(ErrorCode::ShapeMismatch, "slice_cols: invalid column range");
  const std::size_t width = end - begin;
  Tensor out({m, width});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.value().ptr() + i * n + begin, width, out.ptr() + i * width);
  return make_op("slice_cols", std::move(out), {a},
                 [m, n, begin, width](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t i = 0; i < m; ++i)
                     kernels::active().axpy(1.0, g.ptr() + i * width, grads[0]->ptr() + i * n + begin, width);
                 });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat_cols: no inputs");
  for (const Var& p : parts) require_rank(p, 2, "concat_cols");
  const std::size_t m = parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.shape()[0] != m) mismatch("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].value().ptr() + i * widths[k], widths[k], out.ptr() + i * total + offset);
    offset += widths[k];
  }
  return make_op("concat_cols", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [widths, m, total](const Tensor& g, std::span<Tensor* const> grads) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < widths.size(); ++k) {
                     if (grads[k]) {
                       for (std::size_t i = 0; i < m; ++i)
                         kernels::active().axpy(1.0, g.ptr() + i * total + off, grads[k]->ptr() + i * widths[k], widths[k]);
                     }
                     off += widths[k];
                   }
                 });
}

Var embedding(const Var& table, std::span<const std::size_t> ids, std::size_t rows) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  if (rows == 0) fail(ErrorCode::ShapeMismatch, "embedding: zero output rows");
  std::vector<std::size_t> used(ids.begin(), ids.begin() + std::min(ids.size(), rows));
  for (std::size_t id : used) {
    if (id >= vocab) fail(ErrorCode::ShapeMismatch, "embedding: id " + std::to_string(id) + " outside vocabulary");
  }
  Tensor out({rows, d}, 0.0);
  for (std::size_t t = 0; t < used.size(); ++t)
    std::copy_n(table.value().ptr() + used[t] * d, d, out.ptr() + t * d);
  return make_op("embedding", std::move(out), {table},
                 [used = std::move(used), d](const Tensor& g, std::span<Tensor* const> grads) {
                   for (std::size_t t = 0; t < used.size(); ++t)
                     kernels::active().axpy(1.0, g.ptr() + t * d, grads[0]->ptr() + used[t] * d, d);
                 });
}

Var scaled_attention(const Var& q, const Var& k, const Var& v, const Var& bias) {
  require_rank(q, 2, "scaled_attention q");
  require_rank(k, 2, "scaled_attention k");
  require_rank(v, 2, "scaled_attention v");
  if (q.shape()[1] != k.shape()[1]) mismatch("scaled_attention q/k", q.shape(), k.shape());
  if (k.shape()[0] != v.shape()[0]) mismatch("scaled_attention k/v", k.shape(), v.shape());
  if (bias.defined() && bias.shape() != Shape{q.shape()[0], k.shape()[0]}) {
    mismatch("scaled_attention bias", bias.shape(), Shape{q.shape()[0], k.shape()[0]});
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  Var logits = scale(matmul_bt(q, k), inv_sqrt_dk);
  if (bias.defined()) logits = add(logits, bias);
  return matmul(softmax(logits, 1), v);
}

}  // namespace rsfiqa::ops
