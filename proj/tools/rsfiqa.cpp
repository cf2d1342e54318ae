// rsfiqa: command-line front end for the region-guided IQA pipeline.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rsfiqa/ablation.hpp"
#include "rsfiqa/error.hpp"
#include "rsfiqa/metrics.hpp"
#include "rsfiqa/training.hpp"

namespace fs = std::filesystem;
using namespace rsfiqa;

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "TOML run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override one config key, e.g. --set model.regions=4 (repeatable)");
  }
  RunConfig load() const {
    RunConfig c = file.empty() ? RunConfig{} : load_config(file);
    apply_overrides(c, sets);
    c.validate();
    return c;
  }
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

DatasetIndex subset_csv(const DatasetIndex& part, const fs::path& path) {
  DatasetIndex out = part;
  for (auto& r : out.records) r.image_id = fs::absolute(r.path).string();
  write_dataset_csv(out, path);
  return out;
}

nlohmann::json record_json(const RegionDescriptionRecord& r) {
  nlohmann::json j{{"image_id", r.image_id}, {"region_index", r.region_index}, {"content", r.content}};
  for (Dimension d : kDimensions) {
    j["levels"][std::string(dimension_name(d))] = std::string(level_name(r[d].level));
    j["scores"][std::string(dimension_name(d))] = r[d].score;
  }
  return j;
}

int run_synth(std::size_t count, std::uint64_t seed, const std::string& out, std::size_t size) {
  const DatasetIndex index = make_synthetic_dataset(count, seed, out, size);
  std::cout << "wrote " << index.size() << " images and " << (fs::path(out) / "dataset.csv").string() << "\n";
  return 0;
}

int run_segment(const ConfigFlags& flags, const std::string& image_path, const std::string& out) {
  const RunConfig c = flags.load();
  const ImageTensor image = read_png(image_path);
  KMeansSegmenter segmenter;
  MaskSet mask = postprocess(segmenter.segment(image, c.regions, c.seed), c.regions, image.height(), image.width());
  mask.segmenter_id = segmenter.id();
  mask.seed = c.seed;
  save_mask(mask, out);
  std::cout << "regions " << mask.l_eff << " background "
            << (mask.background_index ? std::to_string(*mask.background_index) : "none") << "\n";
  for (std::size_t r = 0; r < mask.l_eff; ++r)
    std::cout << "region " << r << " area " << mask.area(r) << " score " << mask.scores[r] << "\n";
  std::cout << "wrote " << mask_paths(out).labels.string() << " and " << mask_paths(out).sidecar.string() << "\n";
  return 0;
}

int run_describe(const ConfigFlags& flags, const std::string& image_path, const std::string& mask_base,
                 const std::string& cache_path, long region) {
  const RunConfig c = flags.load();
  const ImageTensor image = read_png(image_path);
  MaskSet mask;
  if (mask_base.empty()) {
    mask = postprocess(KMeansSegmenter().segment(image, c.regions, c.seed), c.regions, image.height(), image.width());
  } else {
    mask = load_mask(mask_base);
  }
  Providers providers = make_providers(c);
  std::unique_ptr<DescriptionCache> cache;
  if (!cache_path.empty()) cache = std::make_unique<DescriptionCache>(cache_path);
  const DescriptionFields fields = c.description_fields();
  for (std::size_t r = 0; r < mask.l_eff; ++r) {
    if (region >= 0 && static_cast<std::size_t>(region) != r) continue;
    const auto rec = describe_region(*providers.describer, cache.get(), image, mask, r, image_path);
    nlohmann::json j = record_json(rec);
    j["text"] = compose_description(rec, fields);
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int run_train(const ConfigFlags& flags, const std::string& dataset, const std::string& images,
              const std::string& split_file, const std::string& out, const std::string& work) {
  const RunConfig c = flags.load();
  const DatasetIndex index = load_dataset(dataset, images);
  const DatasetSplit split = split_file.empty() ? split_dataset(index, c.split, c.seed) : split_from_file(index, split_file);
  fs::create_directories(out);
  subset_csv(split.train, fs::path(out) / "train.csv");
  subset_csv(split.val, fs::path(out) / "val.csv");
  subset_csv(split.test, fs::path(out) / "test.csv");

  const Providers providers = make_providers(c, work.empty() ? fs::path(out) / "work" : fs::path(work));
  std::cout << "preparing " << index.size() << " images (train " << split.train.size() << ", val "
            << split.val.size() << ", test " << split.test.size() << ")" << std::endl;
  const auto train_set = prepare_samples(c, split.train, providers);
  const auto val_set = prepare_samples(c, split.val, providers);

  std::ofstream log(fs::path(out) / "log.csv");
  log << "epoch,lr,train_loss,val_srcc\n";
  TrainOptions options;
  options.on_epoch = [&](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " lr " << e.lr << " train_loss " << e.train_loss << " val_srcc "
              << (std::isnan(e.val_srcc) ? std::string("nan") : fixed(e.val_srcc)) << std::endl;
    log << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_srcc << '\n' << std::flush;
  };
  const Checkpoint ck = train(c, train_set, val_set, options);
  save_checkpoint(ck, fs::path(out) / "model.ckpt");
  std::cout << "best epoch " << ck.best_epoch << "; wrote " << (fs::path(out) / "model.ckpt").string() << "\n";
  return 0;
}

int run_predict(const std::string& checkpoint, const std::string& dataset, const std::string& images,
                const std::string& out, const std::string& work) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto model = restore_model(ck);
  const DatasetIndex index = load_dataset(dataset, images);
  const Providers providers = make_providers(ck.config, work);
  const auto samples = prepare_samples(ck.config, index, providers);
  const auto preds = predict_mos(*model, ck.normalization, samples);
  write_predictions_csv(out, preds);
  std::cout << "wrote " << preds.size() << " predictions to " << out << "\n";
  return 0;
}

int run_eval(const std::vector<std::string>& predictions, const std::string& labels, const std::string& split) {
  if (predictions.size() == 1) {
    const MetricReport r = evaluate(predictions[0], labels, split);
    std::cout << "split " << r.split << " n " << r.count << " plcc " << fixed(r.plcc, 6) << " srcc "
              << fixed(r.srcc, 6) << "\n";
    return 0;
  }
  std::vector<fs::path> paths(predictions.begin(), predictions.end());
  const SeedSummary s = evaluate_seeds(paths, labels);
  for (std::size_t i = 0; i < s.runs.size(); ++i)
    std::cout << paths[i].string() << " plcc " << fixed(s.runs[i].plcc, 6) << " srcc " << fixed(s.runs[i].srcc, 6)
              << "\n";
  std::cout << "mean plcc " << fixed(s.plcc_mean, 6) << " std " << fixed(s.plcc_std, 6) << " srcc "
            << fixed(s.srcc_mean, 6) << " std " << fixed(s.srcc_std, 6) << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed, double epsilon, std::size_t samples) {
  const ModelGradCheck g = run_model_gradcheck(seed, epsilon, samples);
  std::cout << "max relative error " << g.result.max_relative_error << " over " << g.result.coordinates
            << " coordinates in " << g.parameter_groups << " parameter groups (" << fixed(g.seconds, 2) << " s)\n";
  std::cout << "worst " << g.result.worst_parameter << "[" << g.result.worst_index << "] analytic "
            << g.result.worst_analytic << " numeric " << g.result.worst_numeric << "\n";
  const bool ok = g.result.max_relative_error < 1e-3;
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

// "name:key=value,key=value"
AblationVariant parse_variant(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0) {
    fail(ErrorCode::InvalidGrid, "variant '" + text + "' is not name:key=value[,key=value]");
  }
  AblationVariant v{text.substr(0, colon), {}};
  std::stringstream rest(text.substr(colon + 1));
  for (std::string item; std::getline(rest, item, ',');)
    if (!item.empty()) v.overrides.push_back(item);
  return v;
}

int run_ablate(const ConfigFlags& flags, const std::string& dataset, const std::string& images,
               const std::vector<std::string>& grids, const std::vector<std::string>& variants,
               const std::string& out, const std::string& work, std::size_t repeats) {
  const RunConfig c = flags.load();
  std::vector<AblationVariant> grid;
  for (const auto& g : grids)
    for (auto& v : standard_grid(g)) grid.push_back(std::move(v));
  for (const auto& v : variants) grid.push_back(parse_variant(v));
  if (grid.empty()) fail(ErrorCode::InvalidGrid, "no --grid or --variant given");
  const DatasetIndex index = load_dataset(dataset, images);
  AblationOptions options;
  options.timing_repeats = repeats;
  options.work_dir = work;
  options.on_row = [](const AblationRow& r) {
    std::cout << "done " << r.name << ": plcc " << fixed(r.test.plcc) << " srcc " << fixed(r.test.srcc) << " time "
              << fixed(r.seconds_per_image, 5) << " s/img" << std::endl;
  };
  const auto rows = ablate(c, index, grid, options);
  const std::string table = format_ablation_table(rows);
  std::cout << table;
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) fail(ErrorCode::IoError, "cannot write " + out);
    f << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-guided no-reference image quality assessment"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with region-local distortions");
  std::size_t synth_count = 80, synth_size = 64;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--size", synth_size, "Image side in pixels")->capture_default_str();

  // segment
  auto* segment = app.add_subcommand("segment", "Segment an image into at most L regions");
  ConfigFlags segment_cfg;
  std::string segment_image, segment_out;
  segment->add_option("--image", segment_image, "PNG image")->required()->check(CLI::ExistingFile);
  segment->add_option("--out", segment_out, "Mask base path (writes <base>.mask.png and <base>.mask.json)")->required();
  segment_cfg.attach(segment);

  // describe
  auto* describe = app.add_subcommand("describe", "Describe every region of an image, one JSON line each");
  ConfigFlags describe_cfg;
  std::string describe_image, describe_mask, describe_cache;
  long describe_region_index = -1;
  describe->add_option("--image", describe_image, "PNG image")->required()->check(CLI::ExistingFile);
  describe->add_option("--mask", describe_mask, "Mask base path from `segment` (segments on the fly otherwise)");
  describe->add_option("--cache", describe_cache, "Description cache (JSONL)");
  describe->add_option("--region", describe_region_index, "Only this region");
  describe_cfg.attach(describe);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  ConfigFlags train_cfg;
  std::string train_dataset, train_images, train_split, train_out, train_work;
  train_cmd->add_option("--dataset", train_dataset, "Dataset CSV (image_path,mos)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--images", train_images, "Image directory (defaults to the CSV's directory)");
  train_cmd->add_option("--split-file", train_split, "CSV image_path,split with train/val/test assignments");
  train_cmd->add_option("--out", train_out, "Run directory for model.ckpt, log.csv and split CSVs")->required();
  train_cmd->add_option("--work", train_work, "Mask and description cache directory (default <out>/work)");
  train_cfg.attach(train_cmd);

  // predict
  auto* predict = app.add_subcommand("predict", "Score a dataset with a checkpoint");
  std::string predict_ckpt, predict_dataset, predict_images, predict_out, predict_work;
  predict->add_option("--checkpoint", predict_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--dataset", predict_dataset, "Dataset CSV (image_path,mos)")->required()->check(CLI::ExistingFile);
  predict->add_option("--images", predict_images, "Image directory");
  predict->add_option("--out", predict_out, "Predictions CSV (image_id,score)")->required();
  predict->add_option("--work", predict_work, "Mask and description cache directory");

  // eval
  auto* eval = app.add_subcommand("eval", "PLCC/SRCC of predictions against labels");
  std::vector<std::string> eval_preds;
  std::string eval_labels, eval_split = "test";
  eval->add_option("--predictions", eval_preds, "Predictions CSV; several files give a per-seed summary")
      ->required()
      ->expected(1, -1);
  eval->add_option("--labels", eval_labels, "Labels CSV (image_id,mos or a dataset CSV)")->required();
  eval->add_option("--split", eval_split, "Split name for the report")->capture_default_str();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full model's gradients");
  std::uint64_t gc_seed = 0;
  double gc_eps = 1e-4;
  std::size_t gc_samples = 4;
  gradcheck->add_option("--seed", gc_seed, "Seed for parameters, inputs and sampled coordinates")->capture_default_str();
  gradcheck->add_option("--epsilon", gc_eps, "Central-difference step")->capture_default_str();
  gradcheck->add_option("--samples", gc_samples, "Coordinates sampled per parameter tensor")->capture_default_str();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate a grid of configurations");
  ConfigFlags ablate_cfg;
  std::string ablate_dataset, ablate_images, ablate_out, ablate_work;
  std::vector<std::string> ablate_grids, ablate_variants;
  std::size_t ablate_repeats = 3;
  ablate_cmd->add_option("--dataset", ablate_dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--images", ablate_images, "Image directory");
  ablate_cmd->add_option("--grid", ablate_grids, "components | prompts | dims | regions | rsa (repeatable)");
  ablate_cmd->add_option("--variant", ablate_variants, "Custom row name:key=value[,key=value] (repeatable)");
  ablate_cmd->add_option("--out", ablate_out, "Write the table here as well");
  ablate_cmd->add_option("--work", ablate_work, "Mask and description cache directory");
  ablate_cmd->add_option("--timing-repeats", ablate_repeats, "Timing runs per image (minimum kept)")->capture_default_str();
  ablate_cfg.attach(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_count, synth_seed, synth_out, synth_size);
    if (*segment) return run_segment(segment_cfg, segment_image, segment_out);
    if (*describe) return run_describe(describe_cfg, describe_image, describe_mask, describe_cache, describe_region_index);
    if (*train_cmd) return run_train(train_cfg, train_dataset, train_images, train_split, train_out, train_work);
    if (*predict) return run_predict(predict_ckpt, predict_dataset, predict_images, predict_out, predict_work);
    if (*eval) return run_eval(eval_preds, eval_labels, eval_split);
    if (*gradcheck) return run_gradcheck(gc_seed, gc_eps, gc_samples);
    if (*ablate_cmd)
      return run_ablate(ablate_cfg, ablate_dataset, ablate_images, ablate_grids, ablate_variants, ablate_out,
                        ablate_work, ablate_repeats);
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return e.code() == ErrorCode::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
