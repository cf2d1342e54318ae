#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "rsfiqa/ablation.hpp"
#include "rsfiqa/metrics.hpp"
#include "support.hpp"

using namespace rsfiqa;
using testing::code_of;
using testing::TempDir;

namespace {

RunConfig tiny_config() {
  RunConfig c = gradcheck_config(3);
  c.epochs = 4;
  c.batch_size = 3;
  c.lr = 1e-3;
  c.patience = 0;
  return c;
}

std::vector<PreparedSample> tiny_samples(const RunConfig& c, std::size_t n, std::uint64_t seed = 100) {
  Providers providers = make_providers(c);
  std::vector<PreparedSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const SyntheticSample s = generate_synthetic_sample(c.height, seed + i);
    out.push_back(prepare_image(c, "s" + std::to_string(i), s.image, s.mos, providers));
  }
  return out;
}

std::vector<Tensor> values(const RsfiqaModel& m) {
  std::vector<Tensor> v;
  for (const auto& e : m.params().entries()) v.push_back(e.var.value());
  return v;
}

}  // namespace

TEST_CASE("model forward") {
  const RunConfig c = tiny_config();
  RsfiqaModel model(c);
  const auto samples = tiny_samples(c, 2);
  NoGradGuard ng;

  SUBCASE("score is a single value in (0, 1)") {
    for (const auto& s : samples) {
      const Tensor y = model.forward(s).value();
      REQUIRE(y.shape() == Shape{1});
      CHECK(y[0] > 0.0);
      CHECK(y[0] < 1.0);
    }
  }
  SUBCASE("trace extents") {
    const auto t = model.trace(samples[0].image, samples[0].mask, model.region_texts(samples[0]));
    CHECK(t.fused.shape() == Shape{2, 2, 8});
    CHECK(t.bias.shape() == Shape{4, 4});
    CHECK(t.attended.shape() == Shape{2, 2, 8});
  }
  SUBCASE("lambda = 0 reproduces the model without the bias path") {
    RunConfig off = c;
    off.rsa_bias = false;
    RsfiqaModel plain(off);
    Var lambda = model.params().get("rsa.lambda");
    lambda.mutable_value()[0] = 0.0;
    for (const auto& s : samples) {
      CHECK(std::abs(model.forward(s).value()[0] - plain.forward(s).value()[0]) <= 1e-12);
    }
    lambda.mutable_value()[0] = 0.5;
    CHECK(model.forward(samples[0]).value()[0] != plain.forward(samples[0]).value()[0]);
  }
  SUBCASE("mhf off uses only the top level") {
    RunConfig off = c;
    off.mhf = false;
    RsfiqaModel top_only(off);
    const double a = top_only.forward(samples[0]).value()[0];
    CHECK(std::isfinite(a));
    CHECK(a != model.forward(samples[0]).value()[0]);
  }
  SUBCASE("descriptions off gives the placeholder text") {
    RunConfig off = c;
    off.mllm = false;
    RsfiqaModel m(off);
    for (const auto& t : m.region_texts(samples[0])) CHECK(t == kPlaceholderDescription);
    CHECK(model.region_texts(samples[0])[0] != kPlaceholderDescription);
  }
  SUBCASE("contract violations") {
    const ImageTensor wrong(Tensor({32, 32, 3}, 0.5));
    CHECK(code_of([&] { model.forward(wrong, samples[0].mask, model.region_texts(samples[0])); }) ==
          ErrorCode::ShapeMismatch);
    std::vector<std::string> short_texts{"a"};
    CHECK(code_of([&] { model.forward(samples[0].image, samples[0].mask, short_texts); }) == ErrorCode::LengthMismatch);
  }
  SUBCASE("same seed, same parameters") {
    RsfiqaModel again(c);
    CHECK(values(again) == values(model));
  }
}

TEST_CASE("sample preparation") {
  const RunConfig c = tiny_config();
  TempDir dir("prepare");
  const DatasetIndex index = make_synthetic_dataset(5, 2, dir / "data", 32);
  const Providers cached = make_providers(c, dir / "work");
  const auto parallel = prepare_samples(c, index, cached, 3);
  REQUIRE(parallel.size() == 5);
  CHECK(std::filesystem::exists(dir / "work" / "descriptions.jsonl"));

  const Providers fresh = make_providers(c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const PreparedSample s = prepare_sample(c, index.records[i], fresh);
    CHECK(parallel[i].image_id == index.records[i].image_id);
    CHECK(parallel[i].image.height() == 16);  // resized to the model input
    CHECK(parallel[i].mask == s.mask);
    CHECK(parallel[i].records == s.records);
    CHECK(parallel[i].mos == index.records[i].mos);
  }
  // Second pass reads masks and descriptions back from the work dir.
  const Providers reread = make_providers(c, dir / "work");
  const auto again = prepare_samples(c, index, reread, 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    CHECK(again[i].mask == parallel[i].mask);
    CHECK(again[i].records == parallel[i].records);
  }
  CHECK(reread.cache->size() == cached.cache->size());
}

TEST_CASE("cosine schedule") {
  RunConfig c;
  c.lr = 0.2;
  c.t_max = 10;
  CHECK(cosine_lr(c, 0) == 0.2);
  CHECK(cosine_lr(c, 5) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(cosine_lr(c, 10) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_lr(c, 20) == doctest::Approx(0.2).epsilon(1e-15));
  c.eta_min = 0.05;
  c.eta_max = 0.3;
  CHECK(cosine_lr(c, 0) == 0.3);
  CHECK(cosine_lr(c, 10) == doctest::Approx(0.05));
}

TEST_CASE("AdamW matches a hand-rolled update") {
  ParameterSet params;
  Var w = params.add("w", Tensor({2}, 0.0));
  w.mutable_value()[0] = 1.0;
  w.mutable_value()[1] = -2.0;
  AdamW opt(params, 0.1);
  double p[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double g_of[2] = {3.0, -0.5};
  for (int t = 1; t <= 3; ++t) {
    params.zero_grad();
    Var loss = ops::sum(ops::mul(w, Var::constant(Tensor({2}, std::vector<double>{g_of[0], g_of[1]}))));
    backward(loss);
    opt.step(0.01);
    for (int k = 0; k < 2; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g_of[k];
      v[k] = 0.999 * v[k] + 0.001 * g_of[k] * g_of[k];
      const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
      p[k] -= 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * p[k]);
    }
    CHECK(w.value()[0] == doctest::Approx(p[0]).epsilon(1e-14));
    CHECK(w.value()[1] == doctest::Approx(p[1]).epsilon(1e-14));
  }
  CHECK(opt.steps() == 3);
}

TEST_CASE("training") {
  RunConfig c = tiny_config();
  const auto train_set = tiny_samples(c, 6);
  const auto val_set = tiny_samples(c, 3, 500);

  SUBCASE("zero learning rate leaves every parameter untouched") {
    RunConfig frozen = c;
    frozen.lr = 0.0;
    const Checkpoint ck = train(frozen, train_set, val_set);
    RsfiqaModel init(frozen);
    REQUIRE(ck.parameters.size() == init.params().size());
    for (std::size_t i = 0; i < ck.parameters.size(); ++i) CHECK(ck.parameters[i].second == init.params().entries()[i].var.value());
  }
  SUBCASE("identical runs give identical logs and parameters") {
    const Checkpoint a = train(c, train_set, val_set), b = train(c, train_set, val_set);
    REQUIRE(a.log.size() == c.epochs);
    CHECK(a.log == b.log);
    CHECK(a.parameters == b.parameters);
    CHECK(a.log[0].lr == c.lr);
    CHECK(a.log.back().train_loss < a.log.front().train_loss);
  }
  SUBCASE("normalization comes from the training split") {
    const Checkpoint ck = train(c, train_set, {});
    double lo = 1e9, hi = -1e9;
    for (const auto& s : train_set) {
      lo = std::min(lo, s.mos);
      hi = std::max(hi, s.mos);
    }
    CHECK(ck.normalization.lo == lo);
    CHECK(ck.normalization.hi == hi);
    for (const auto& e : ck.log) CHECK(std::isnan(e.val_srcc));
  }
  SUBCASE("the retained parameters are the best validation epoch") {
    RunConfig longer = c;
    longer.epochs = 8;
    const Checkpoint ck = train(longer, train_set, val_set);
    const auto model = restore_model(ck);
    std::vector<double> mos;
    for (const auto& s : val_set) mos.push_back(s.mos);
    CHECK(srcc(mos, predict_unit(*model, val_set)) == ck.log.at(ck.best_epoch).val_srcc);
    for (const auto& e : ck.log) CHECK(e.val_srcc <= ck.log[ck.best_epoch].val_srcc);
  }
  SUBCASE("early stopping") {
    RunConfig patient = c;
    patient.epochs = 40;
    patient.patience = 2;
    const Checkpoint ck = train(patient, train_set, val_set);
    CHECK(ck.log.size() <= ck.best_epoch + 3);
  }
  SUBCASE("non-finite loss names the batch") {
    auto broken = train_set;
    broken[4].mos = std::nan("");
    try {
      train(c, broken, {});
      FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteLoss);
      CHECK(std::string(e.what()).find("batch") != std::string::npos);
    }
  }
  SUBCASE("degenerate inputs") {
    CHECK(code_of([&] { train(c, {}, {}); }) == ErrorCode::EmptyBatch);
    auto flat = train_set;
    for (auto& s : flat) s.mos = 3.0;
    CHECK(code_of([&] { train(c, flat, {}); }) == ErrorCode::DegenerateRange);
  }
}

TEST_CASE("checkpoint persistence") {
  const RunConfig c = tiny_config();
  const auto samples = tiny_samples(c, 4);
  const Checkpoint ck = train(c, samples, {});
  TempDir dir("ckpt");
  save_checkpoint(ck, dir / "model.ckpt");
  const Checkpoint back = load_checkpoint(dir / "model.ckpt");
  CHECK(back.config == ck.config);
  CHECK(back.parameters == ck.parameters);
  CHECK(back.normalization.lo == ck.normalization.lo);
  CHECK(back.normalization.hi == ck.normalization.hi);
  REQUIRE(back.log.size() == ck.log.size());
  for (std::size_t i = 0; i < ck.log.size(); ++i) {
    CHECK(back.log[i].train_loss == ck.log[i].train_loss);
    CHECK(back.log[i].lr == ck.log[i].lr);
  }

  const auto a = predict_mos(*restore_model(ck), ck.normalization, samples);
  const auto b = predict_mos(*restore_model(back), back.normalization, samples);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::memcmp(&a[i].second, &b[i].second, sizeof(double)) == 0);
  }

  std::string bytes;
  {
    std::ifstream in(dir / "model.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK(code_of([&] { load_checkpoint(write("flip.ckpt", flipped)); }) == ErrorCode::CorruptCheckpoint);
  CHECK(code_of([&] { load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() - 40))); }) ==
        ErrorCode::CorruptCheckpoint);
  CHECK(code_of([&] { load_checkpoint(write("magic.ckpt", "NOTACKPT" + bytes.substr(8))); }) ==
        ErrorCode::CorruptCheckpoint);
  CHECK(code_of([&] { load_checkpoint(dir / "absent.ckpt"); }) == ErrorCode::IoError);

  Checkpoint mismatched = ck;
  mismatched.parameters.pop_back();
  CHECK(code_of([&] { restore_model(mismatched); }) == ErrorCode::CorruptCheckpoint);
}

TEST_CASE("ablation harness") {
  CHECK(code_of([] { ablate(RunConfig{}, DatasetIndex{}, {}); }) == ErrorCode::InvalidGrid);
  CHECK(code_of([] { standard_grid("colour"); }) == ErrorCode::InvalidGrid);
  CHECK(standard_grid("components").size() == 5);
  CHECK(standard_grid("prompts").size() == 5);
  CHECK(standard_grid("dims").size() == 6);
  CHECK(standard_grid("regions").size() == 4);
  for (const auto& name : standard_grid_names()) {
    for (const auto& v : standard_grid(name)) {
      RunConfig c;
      apply_overrides(c, v.overrides);
      CHECK_NOTHROW(c.validate());
    }
  }

  TempDir dir("ablate");
  const DatasetIndex index = make_synthetic_dataset(10, 1, dir / "data", 16);
  RunConfig c = tiny_config();
  c.epochs = 2;
  c.split = {0.6, 0.0, 0.4};
  const auto grid = standard_grid("rsa");
  const auto rows = ablate(c, index, grid, {.timing_repeats = 1, .work_dir = dir / "work"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].name == "rsa-bias");
  CHECK(rows[1].name == "lambda=0");
  for (const auto& r : rows) {
    CHECK(r.test.count == 4);
    CHECK(r.epochs_run == 2);
    CHECK(r.seconds_per_image > 0.0);
  }
  const std::string table = format_ablation_table(rows);
  CHECK(table.find("lambda=0") != std::string::npos);
  CHECK(table.find("SRCC") != std::string::npos);
}

TEST_CASE("full-model gradient check") {
  const ModelGradCheck g = run_model_gradcheck(7);
  CAPTURE(g.result.worst_parameter);
  CHECK(g.result.max_relative_error < 1e-3);
  CHECK(g.result.coordinates >= 200);
  CHECK(g.parameter_groups == g.result.parameters);
}
