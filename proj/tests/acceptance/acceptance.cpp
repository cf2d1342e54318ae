// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Pass a list of criterion numbers (e.g. `acceptance 1 4 8`) to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "metric_oracles.hpp"
#include "op_gradient_suite.hpp"
#include "rsfiqa/ablation.hpp"
#include "rsfiqa/description.hpp"
#include "rsfiqa/metrics.hpp"
#include "rsfiqa/training.hpp"
#include "segmentation_fixtures.hpp"
#include "support.hpp"

using namespace rsfiqa;
using namespace rsfiqa::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome ac1_model_gradcheck() {
  const ModelGradCheck g = run_model_gradcheck(7);
  const auto& r = g.result;
  const bool pass = r.max_relative_error < 1e-3 && r.coordinates >= 200 && g.seconds < 120.0;
  return {pass, fmt("max rel err %.3g over %zu coords, %zu param groups, %.2f s (need < 1e-3, >= 200, < 120 s)",
                    r.max_relative_error, r.coordinates, g.parameter_groups, g.seconds)};
}

Outcome ac2_op_gradients() {
  double worst = 0.0;
  std::string worst_op;
  std::set<std::string> ops_seen;
  std::size_t coords = 0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    for (const auto& c : run_op_gradient_suite(seed)) {
      ops_seen.insert(c.op);
      coords += c.result.coordinates;
      if (!(c.result.max_relative_error <= worst)) {
        worst = c.result.max_relative_error;
        worst_op = c.op;
      }
    }
  }
  return {worst < 1e-5, fmt("%zu op cases, %zu coords, worst %.3g (%s), need < 1e-5", ops_seen.size(), coords, worst,
                            worst_op.c_str())};
}

Outcome ac3_metric_oracles() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto [a, b] = random_metric_pair(rng);
    worst = std::max(worst, std::abs(plcc(a, b) - static_cast<double>(oracle_plcc(a, b))));
    worst = std::max(worst, std::abs(srcc(a, b) - static_cast<double>(oracle_srcc(a, b))));
  }
  const std::vector<double> x{1, 2, 3}, y{3, 1, 2}, z{1, 2, 4};
  const double s = srcc(x, y), p = plcc(x, z);
  const bool pass = worst <= 1e-9 && s == -0.5 && std::abs(p - 0.98198) <= 1e-5;
  return {pass, fmt("1000 pairs worst |diff| %.3g (need <= 1e-9); srcc example %.17g; plcc example %.7f", worst, s, p)};
}

// Small full model and one image with three regions.
struct Probe {
  RunConfig config = gradcheck_config(11);
  ImageTensor image;
  MaskSet mask;
  std::vector<std::string> texts{"a sharp red roof", "noisy grey sky with blocky artifacts", "soft green grass"};

  Probe() {
    std::mt19937_64 rng(5);
    image = ImageTensor(random_tensor({16, 16, 3}, rng, 0.0, 1.0));
    std::vector<RawMask> raw{rect_mask(16, 16, 0, 8, 0, 16, 0.9), rect_mask(16, 16, 8, 16, 0, 9, 0.8)};
    mask = postprocess(raw, 3, 16, 16);
  }
};

Outcome ac4_rsa() {
  Probe p;
  NoGradGuard ng;
  std::mt19937_64 rng(4);

  // lambda = 0 against the model built without the bias path
  RsfiqaModel with(p.config);
  Var(with.params().get("rsa.lambda")).mutable_value()[0] = 0.0;
  RunConfig off_config = p.config;
  off_config.rsa_bias = false;
  RsfiqaModel without(off_config);
  double reduction = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const ImageTensor img(random_tensor({16, 16, 3}, rng, 0.0, 1.0));
    reduction = std::max(reduction, std::abs(with.forward(img, p.mask, p.texts).item() -
                                             without.forward(img, p.mask, p.texts).item()));
  }

  // structure of B for lambda > 0, at the trained-from-init value and a large one
  double asym = 0.0, min_quad = INFINITY, row_err = 0.0;
  RsfiqaModel model(p.config);
  for (double lambda : {0.1, 3.0, 1e3}) {
    Var(model.params().get("rsa.lambda")).mutable_value()[0] = lambda;
    const ForwardTrace t = model.trace(p.image, p.mask, p.texts);
    const Tensor b = t.bias.value();
    const std::size_t n = b.dim(0);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v) asym = std::max(asym, std::abs(b.at(u, v) - b.at(v, u)));
    for (int i = 0; i < 100; ++i) {
      const Tensor x = random_tensor({n}, rng);
      double q = 0.0;
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) q += x[u] * b.at(u, v) * x[v];
      min_quad = std::min(min_quad, q);
    }
    // attention weights softmax(Q K^T / sqrt(C) + B) recomputed from the model's projections
    const std::size_t c = t.fused.shape()[2];
    const Var flat = ops::reshape(t.fused, {n, c});
    auto proj = [&](const char* which) {
      const std::string base = std::string("rsa.attn.") + which;
      return ops::linear(flat, model.params().get(base + ".weight"), model.params().get(base + ".bias"));
    };
    const Var logits =
        ops::add(ops::scale(ops::matmul_bt(proj("q"), proj("k")), 1.0 / std::sqrt(static_cast<double>(c))), t.bias);
    const Tensor w = ops::softmax(logits, 1).value();
    for (std::size_t u = 0; u < n; ++u) {
      double s = 0.0;
      for (std::size_t v = 0; v < n; ++v) s += w.at(u, v);
      row_err = std::max(row_err, std::abs(s - 1.0));
    }
  }
  const bool pass = reduction <= 1e-12 && asym <= 1e-12 && min_quad >= -1e-10 && row_err <= 1e-9;
  return {pass, fmt("lambda=0 vs no-bias max diff %.3g; B asym %.3g; min x'Bx %.3g; attention row sum err %.3g",
                    reduction, asym, min_quad, row_err)};
}

Outcome ac5_masks() {
  std::mt19937_64 rng(5);
  std::size_t fixtures = 0, oracle_ok = 0, partitions = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t h = 3 + rng() % 8, w = 3 + rng() % 8, count = 1 + rng() % 7, L = 2 + rng() % 5;
    const auto raw = random_rect_masks(rng, h, w, count);
    const MaskSet m = postprocess(raw, L, h, w);
    ++fixtures;
    oracle_ok += matches_oracle(m, raw, L);
    partitions += is_exact_partition(m) && m.l_eff <= L;
  }
  std::size_t deterministic = 0, images = 0;
  for (std::uint64_t seed : {0ull, 1ull, 7ull, 42ull}) {
    const ImageTensor img(random_tensor({20, 20, 3}, rng, 0.0, 1.0));
    const auto a = fallback_segment(img, 5, seed), b = fallback_segment(img, 5, seed);
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same = a[i].pixels == b[i].pixels && a[i].predicted_iou == b[i].predicted_iou;
    const MaskSet ma = postprocess(a, 5, 20, 20);
    same = same && ma == postprocess(b, 5, 20, 20) && is_exact_partition(ma);
    ++images;
    deterministic += same;
  }
  const bool pass = oracle_ok == fixtures && partitions == fixtures && deterministic == images;
  return {pass, fmt("IoU-order assignment %zu/%zu fixtures; exact partitions %zu/%zu; fallback deterministic %zu/%zu",
                    oracle_ok, fixtures, partitions, fixtures, deterministic, images)};
}

RunConfig experiment_config() {
  RunConfig c;
  c.height = c.width = 64;
  c.lr = 1e-3;
  c.patience = 0;
  c.seed = 0;
  return c;
}

Outcome ac6_overfit(const std::filesystem::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = experiment_config();
  c.epochs = c.t_max = 300;
  c.augment = false;
  const DatasetIndex index = make_synthetic_dataset(16, 0, work / "overfit");
  const Providers providers = make_providers(c, work / "overfit-cache");
  const auto samples = prepare_samples(c, index, providers);
  const Checkpoint ck = train(c, samples, {});
  const auto model = restore_model(ck);
  const auto unit = predict_unit(*model, samples);
  const auto mos = predict_mos(*model, ck.normalization, samples);
  std::vector<double> y, yhat;
  double mse_unit = 0.0, mse_mos = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    mse_unit += std::pow(unit[i] - ck.normalization.apply(samples[i].mos), 2);
    mse_mos += std::pow(mos[i].second - samples[i].mos, 2);
    y.push_back(samples[i].mos);
    yhat.push_back(mos[i].second);
  }
  mse_unit /= static_cast<double>(samples.size());
  mse_mos /= static_cast<double>(samples.size());
  const double s = srcc(y, yhat);
  const double secs = seconds_since(t0);
  const bool pass = mse_unit <= 1e-3 && s >= 0.95 && secs <= 600.0;
  return {pass, fmt("%zu epochs: train MSE %.3g (normalized), %.3g (MOS units), train SRCC %.4f, %.0f s "
                    "(need MSE <= 1e-3, SRCC >= 0.95, <= 600 s)",
                    ck.log.size(), mse_unit, mse_mos, s, secs)};
}

Outcome ac7_generalization(const std::filesystem::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = experiment_config();
  c.epochs = c.t_max = 60;
  c.split = {0.8, 0.0, 0.2};
  const DatasetIndex index = make_synthetic_dataset(80, 0, work / "general");
  const std::vector<AblationVariant> grid{
      {"full", {}}, {"lambda=0", {"toggles.rsa_bias=false"}}, {"no-description", {"toggles.mllm=false"}}};
  AblationOptions opts;
  opts.timing_repeats = 1;
  opts.work_dir = work / "general-cache";
  const auto rows = ablate(c, index, grid, opts);
  std::cout << format_ablation_table(rows);
  const double full = rows[0].test.srcc;
  const bool pass = full >= 0.6 && rows[0].test.count == 16;
  return {pass, fmt("64 train / %zu test: full SRCC %.4f (need >= 0.6); logged lambda=0 %.4f, no-description %.4f; "
                    "%.0f s",
                    rows[0].test.count, full, rows[1].test.srcc, rows[2].test.srcc, seconds_since(t0))};
}

Outcome ac8_prompts() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  const std::vector<std::string> words{"sky", "red", "parrot", "blurry", "wall", "7", "tree", "over", "the"};
  std::size_t total = 0, ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    for (Dimension d : kDimensions) {
      std::string content = words[rng() % words.size()];
      for (std::size_t i = rng() % 8; i > 0; --i) content += " " + words[rng() % words.size()];
      const double score = trial % 4 == 0 ? static_cast<double>(rng() % 101) : u(rng);
      const std::vector<std::pair<PromptKind, ResponsePayload>> cases{
          {PromptKind::Content, content},
          {PromptKind::Level, static_cast<QualityLevel>(rng() % 5)},
          {PromptKind::Score, score}};
      for (const auto& [kind, payload] : cases) {
        ++total;
        const std::string prompt = format_prompt(kind, d);
        const std::string text = render_response(kind, d, payload);
        ok += !prompt.empty() && parse_response(kind, d, text) == payload &&
              render_response(kind, d, parse_response(kind, d, text)) == text;
      }
    }
  }
  return {ok == total, fmt("%zu/%zu round trips exact over 3 kinds x 5 dimensions", ok, total)};
}

Outcome ac9_determinism(const std::filesystem::path& work) {
  RunConfig c = experiment_config();
  c.height = c.width = 32;
  c.epochs = 8;
  c.t_max = 8;
  c.split = {0.6, 0.2, 0.2};
  const DatasetIndex index = make_synthetic_dataset(20, 9, work / "determinism");
  const DatasetSplit split = split_dataset(index, c.split, c.seed);
  auto run = [&](const std::string& cache) {
    const Providers providers = make_providers(c, work / cache);
    return train(c, prepare_samples(c, split.train, providers), prepare_samples(c, split.val, providers));
  };
  const Checkpoint a = run("det-a"), b = run("det-b");
  bool params_equal = a.parameters.size() == b.parameters.size();
  for (std::size_t i = 0; params_equal && i < a.parameters.size(); ++i)
    params_equal = a.parameters[i].second == b.parameters[i].second;

  const auto path = work / "det.ckpt";
  save_checkpoint(a, path);
  const Checkpoint loaded = load_checkpoint(path);
  const Providers providers = make_providers(c);
  const auto probe = prepare_samples(c, split.test, providers);
  const auto before = predict_mos(*restore_model(a), a.normalization, probe);
  const auto after = predict_mos(*restore_model(loaded), loaded.normalization, probe);
  const bool logs_equal = a.log == b.log && !a.log.empty();
  const bool bitwise = before == after;
  return {logs_equal && params_equal && bitwise,
          fmt("loss logs identical over %zu epochs: %s; parameters identical: %s; reloaded predictions bitwise "
              "equal on %zu images: %s",
              a.log.size(), logs_equal ? "yes" : "no", params_equal ? "yes" : "no", before.size(),
              bitwise ? "yes" : "no")};
}

Outcome ac10_region_sweep(const std::filesystem::path& work) {
  RunConfig c = experiment_config();
  c.epochs = c.t_max = 3;
  c.split = {0.6, 0.0, 0.4};
  const DatasetIndex index = make_synthetic_dataset(20, 10, work / "sweep");
  AblationOptions opts;
  opts.timing_repeats = 5;
  const auto grid = standard_grid("regions");
  const auto rows = ablate(c, index, grid, opts);
  std::cout << format_ablation_table(rows);
  bool complete = rows.size() == 4;
  for (const auto& r : rows) complete = complete && r.test.count > 0 && r.seconds_per_image > 0.0;
  const double t3 = rows.front().seconds_per_image, t6 = rows.back().seconds_per_image;
  const bool pass = complete && rows.front().name == "L=3" && rows.back().name == "L=6" && t6 > t3;
  return {pass, fmt("%zu rows with PLCC/SRCC/time; time(L=3) %.5f s, time(L=6) %.5f s (need L=6 > L=3)", rows.size(),
                    t3, t6)};
}

}  // namespace

int main(int argc, char** argv) {
  TempDir work("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC-1 full-model gradient check", ac1_model_gradcheck},
      {"AC-2 per-op gradients", ac2_op_gradients},
      {"AC-3 metric oracles", ac3_metric_oracles},
      {"AC-4 RSA reduction and structure", ac4_rsa},
      {"AC-5 mask post-processing", ac5_masks},
      {"AC-6 overfit 16 images", [&] { return ac6_overfit(work.path()); }},
      {"AC-7 generalization 64/16", [&] { return ac7_generalization(work.path()); }},
      {"AC-8 prompt round trip", ac8_prompts},
      {"AC-9 determinism and persistence", [&] { return ac9_determinism(work.path()); }},
      {"AC-10 region-count sweep", [&] { return ac10_region_sweep(work.path()); }},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(static_cast<int>(i + 1))) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
