#include <functional>
#include <random>

#include "doctest.h"
#include "rsfiqa/error.hpp"
#include "rsfiqa/numerics/gradcheck.hpp"
#include "rsfiqa/regressor.hpp"
#include "support.hpp"

using namespace rsfiqa;
using testing::random_tensor;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::UsageError;
}

struct Fixture {
  ParameterSet params;
  std::mt19937_64 rng{12};
  QualityHead head;
  explicit Fixture(std::size_t c = 6, std::size_t hidden = 5) : head({c, hidden, 1}, params, rng) {}
  const Tensor& v(const std::string& name) { return params.get(name).value(); }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("quality head") {
  Fixture fx;
  NoGradGuard ng;
  SUBCASE("zero MLP weights give sigmoid of the output bias") {
    for (const char* n : {"head.mlp1.weight", "head.mlp2.weight"}) {
      Var w = fx.params.get(n);
      w.mutable_value().fill(0.0);
    }
    Var b = fx.params.get("head.mlp2.bias");
    b.mutable_value()[0] = 0.7;
    CHECK(fx.head(Var::constant(random_tensor({3, 3, 6}, fx.rng))).value()[0] == sigmoid(0.7));
  }
  SUBCASE("constant map pools to the per-position output") {
    Tensor r({2, 3, 6});
    for (std::size_t p = 0; p < 6; ++p)
      for (std::size_t c = 0; c < 6; ++c) r[p * 6 + c] = 0.1 * static_cast<double>(c) - 0.2;
    Tensor pooled = fx.head.pooled(Var::constant(r)).value();
    // identical rows: attention returns the projected value row
    const Tensor bv = fx.v("head.self_attn.v.bias");
    Tensor row = testing::naive_linear(r.reshaped({6, 6}), fx.v("head.self_attn.v.weight"), &bv);
    for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(pooled[c] - (row.at(0, c) + r[c])) < 1e-12);
  }
  SUBCASE("random map matches the explicit-loop oracle") {
    Tensor r = random_tensor({3, 2, 6}, fx.rng);
    Tensor flat = r.reshaped({6, 6});
    auto lin = [&](const std::string& n, const Tensor& x) {
      const Tensor b = fx.v(n + ".bias");
      return testing::naive_linear(x, fx.v(n + ".weight"), &b);
    };
    Tensor att = testing::naive_attention(lin("head.self_attn.q", flat), lin("head.self_attn.k", flat),
                                          lin("head.self_attn.v", flat), nullptr);
    Tensor pooled({1, 6}, 0.0);
    for (std::size_t p = 0; p < 6; ++p)
      for (std::size_t c = 0; c < 6; ++c) pooled[c] += (att.at(p, c) + flat.at(p, c)) / 6.0;
    Tensor hidden = lin("head.mlp1", pooled);
    for (double& x : hidden.data()) x = std::max(0.0, x);
    const double expect = sigmoid(lin("head.mlp2", hidden)[0]);
    CHECK(std::abs(fx.head(Var::constant(r)).value()[0] - expect) <= 1e-9);
  }
  SUBCASE("output strictly inside (0, 1)") {
    for (int t = 0; t < 20; ++t) {
      const double y = fx.head(Var::constant(random_tensor({2, 2, 6}, fx.rng, -5, 5))).value()[0];
      CHECK(y > 0.0);
      CHECK(y < 1.0);
    }
  }
  SUBCASE("wrong channel count") {
    CHECK(code_of([&] { fx.head(Var::constant(Tensor({2, 2, 5}, 0.0))); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("head gradients") {
  Fixture fx;
  Tensor r = random_tensor({2, 2, 6}, fx.rng);
  auto loss = [&] {
    std::vector<Var> preds{fx.head(Var::constant(r))};
    std::vector<double> targets{0.3};
    return mse_loss(preds, targets);
  };
  auto res = finite_diff_check(loss, fx.params.entries(), {.epsilon = 1e-4, .samples_per_parameter = 10, .seed = 1});
  CAPTURE(res.worst_parameter);
  CHECK(res.max_relative_error < 1e-3);
}

TEST_CASE("mse loss") {
  auto loss = [](std::vector<double> p, std::vector<double> t) {
    std::vector<Var> preds;
    for (double x : p) preds.push_back(Var::constant(Tensor::scalar(x)));
    return mse_loss(preds, t).item();
  };
  CHECK(loss({0.2, 0.9}, {0.2, 0.9}) == 0.0);
  CHECK(loss({0}, {1}) == 1.0);
  CHECK(loss({0, 1}, {1, 1}) == 0.5);
  CHECK(mse(std::vector<double>{0, 1}, std::vector<double>{1, 1}) == 0.5);
  CHECK(loss({0.1, 0.4, 0.8}, {0.3, 0.1, 0.8}) >= 0.0);
  CHECK(code_of([&] { loss({0.1}, {0.1, 0.2}); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([&] { loss({}, {}); }) == ErrorCode::EmptyBatch);
}

TEST_CASE("MOS normalisation") {
  CHECK(normalize_mos(std::vector<double>{10, 20, 30}) == std::vector<double>{0, 0.5, 1});
  CHECK(normalize_mos(std::vector<double>{0, 1}) == std::vector<double>{0, 1});
  CHECK(code_of([] { normalize_mos(std::vector<double>{3, 3, 3}); }) == ErrorCode::DegenerateRange);
  CHECK(code_of([] { normalize_mos(std::vector<double>{3}); }) == ErrorCode::DegenerateRange);
  const MosNormalization n = fit_mos_normalization(std::vector<double>{1.5, 4.5, 2.0});
  CHECK(n.invert(n.apply(3.25)) == doctest::Approx(3.25).epsilon(1e-15));
  // strictly increasing: order preserved
  std::mt19937_64 rng(2);
  std::vector<double> v(50);
  for (double& x : v) x = std::uniform_real_distribution<double>(1, 5)(rng);
  auto u = normalize_mos(v);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) CHECK((v[i] < v[j]) == (u[i] < u[j]));
}
