#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "rsfiqa/error.hpp"
#include "rsfiqa/numerics/tensor.hpp"

namespace rsfiqa::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Naive oracles kept independent of the kernel layer.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out({m, p}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
      out.at(i, j) = s;
    }
  return out;
}

// x w + bias, bias may be null.
inline Tensor naive_linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  Tensor out = naive_matmul(x, w);
  if (bias)
    for (std::size_t i = 0; i < out.dim(0); ++i)
      for (std::size_t j = 0; j < out.dim(1); ++j) out.at(i, j) += (*bias)[j];
  return out;
}

inline Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias) {
  const std::size_t a = q.dim(0), b = k.dim(0), dk = q.dim(1), dv = v.dim(1);
  Tensor out({a, dv}, 0.0);
  for (std::size_t i = 0; i < a; ++i) {
    std::vector<double> logits(b);
    double mx = -1e300;
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < dk; ++t) s += q.at(i, t) * k.at(j, t);
      s /= std::sqrt(static_cast<double>(dk));
      if (bias) s += bias->at(i, j);
      logits[j] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t t = 0; t < dv; ++t) out.at(i, t) += logits[j] / z * v.at(j, t);
  }
  return out;
}

// Error category thrown by f; UsageError when nothing is thrown.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::UsageError;
}

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rsfiqa-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace rsfiqa::testing
