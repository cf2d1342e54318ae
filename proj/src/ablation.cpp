#include "rsfiqa/ablation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

std::vector<std::string> standard_grid_names() { return {"components", "prompts", "dims", "regions", "rsa"}; }

std::vector<AblationVariant> standard_grid(const std::string& kind) {
  if (kind == "components") {
    return {{"baseline", {"toggles.mhf=false", "toggles.mllm=false", "toggles.rsa_bias=false"}},
            {"mhf", {"toggles.mhf=true", "toggles.mllm=false", "toggles.rsa_bias=false"}},
            {"mhf+mllm", {"toggles.mhf=true", "toggles.mllm=true", "toggles.rsa_bias=false"}},
            {"mhf+rsa", {"toggles.mhf=true", "toggles.mllm=false", "toggles.rsa_bias=true"}},
            {"mhf+mllm+rsa", {"toggles.mhf=true", "toggles.mllm=true", "toggles.rsa_bias=true"}}};
  }
  if (kind == "prompts") {
    return {{"none", {"toggles.mllm=false"}},
            {"content", {"prompt.content=true", "prompt.level=false", "prompt.score=false"}},
            {"content+level", {"prompt.content=true", "prompt.level=true", "prompt.score=false"}},
            {"content+score", {"prompt.content=true", "prompt.level=false", "prompt.score=true"}},
            {"content+level+score", {"prompt.content=true", "prompt.level=true", "prompt.score=true"}}};
  }
  if (kind == "dims") {
    std::vector<AblationVariant> grid;
    for (Dimension d : kDimensions) {
      const std::string name(dimension_name(d));
      grid.push_back({"no-" + name, {"dims." + name + "=false"}});
    }
    grid.push_back({"all", {}});
    return grid;
  }
  if (kind == "regions") {
    std::vector<AblationVariant> grid;
    for (int l = 3; l <= 6; ++l) grid.push_back({"L=" + std::to_string(l), {"model.regions=" + std::to_string(l)}});
    return grid;
  }
  if (kind == "rsa") {
    return {{"rsa-bias", {"toggles.rsa_bias=true"}}, {"lambda=0", {"toggles.rsa_bias=false"}}};
  }
  fail(ErrorCode::InvalidGrid, "unknown grid '" + kind + "'");
}

double time_inference(const RsfiqaModel& model, const ImageTensor& image, std::size_t repeats) {
  const RunConfig& config = model.config();
  Providers providers = make_providers(config);
  double best = std::numeric_limits<double>::infinity();
  NoGradGuard guard;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    const PreparedSample s = prepare_image(config, "timing", image, 0.0, providers);
    const double score = model.forward(s).value()[0];
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(score)) fail(ErrorCode::NonFiniteLoss, "non-finite score while timing");
    best = std::min(best, elapsed);
  }
  return best;
}

std::vector<AblationRow> ablate(const RunConfig& base, const DatasetIndex& index,
                                std::span<const AblationVariant> grid, const AblationOptions& options) {
  if (grid.empty()) fail(ErrorCode::InvalidGrid, "ablation grid is empty");
  std::vector<AblationRow> rows;
  for (const auto& variant : grid) {
    RunConfig config = base;
    apply_overrides(config, variant.overrides);
    config.validate();
    const DatasetSplit split = split_dataset(index, config.split, config.seed);
    const Providers providers = make_providers(config, options.work_dir);
    const auto train_set = prepare_samples(config, split.train, providers);
    const auto val_set = prepare_samples(config, split.val, providers);
    const auto test_set = prepare_samples(config, split.test, providers);

    TrainOptions topts;
    if (options.on_epoch) topts.on_epoch = [&](const EpochLog& e) { options.on_epoch(variant.name, e); };
    const Checkpoint ck = train(config, train_set, val_set, topts);
    const auto model = restore_model(ck);

    AblationRow row;
    row.name = variant.name;
    row.epochs_run = ck.log.size();
    const auto preds = predict_unit(*model, test_set);
    std::vector<double> mos;
    for (const auto& s : test_set) mos.push_back(s.mos);
    row.test.count = test_set.size();
    row.test.split = "test";
    try {
      row.test = compute_report(mos, preds, "test");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateVariance) throw;
      row.test.plcc = row.test.srcc = std::numeric_limits<double>::quiet_NaN();
    }
    double total = 0.0;
    for (const auto& s : test_set) total += time_inference(*model, s.image, options.timing_repeats);
    row.seconds_per_image = test_set.empty() ? 0.0 : total / static_cast<double>(test_set.size());
    if (options.on_row) options.on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::size_t width = 13;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %5s  %6s  %12s\n", static_cast<int>(width), "configuration", "PLCC",
                "SRCC", "n", "epochs", "time/img (s)");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %5zu  %6zu  %12.5f\n", static_cast<int>(width), r.name.c_str(),
                  r.test.plcc, r.test.srcc, r.test.count, r.epochs_run, r.seconds_per_image);
    out += buf;
  }
  return out;
}

}  // namespace rsfiqa
