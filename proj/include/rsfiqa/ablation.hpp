#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rsfiqa/metrics.hpp"
#include "rsfiqa/training.hpp"

namespace rsfiqa {

// A named set of `key=value` config overrides applied on top of a base config.
struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;
};

// Built-in grids: components, prompts, dims, regions, rsa. InvalidGrid for
// anything else.
std::vector<AblationVariant> standard_grid(const std::string& kind);
std::vector<std::string> standard_grid_names();

struct AblationRow {
  std::string name;
  MetricReport test;        // NaN correlations when predictions are constant
  double seconds_per_image = 0.0;  // segmentation + description + forward
  std::size_t epochs_run = 0;
};

struct AblationOptions {
  std::size_t timing_repeats = 3;  // minimum over repeats per image
  std::filesystem::path work_dir;  // mask and description caches, optional
  std::function<void(const std::string& variant, const EpochLog&)> on_epoch;
  std::function<void(const AblationRow&)> on_row;
};

// Trains and evaluates every variant on the split drawn from each variant's
// seed. InvalidGrid when the grid is empty.
std::vector<AblationRow> ablate(const RunConfig& base, const DatasetIndex& index,
                                std::span<const AblationVariant> grid, const AblationOptions& options = {});

// Wall-clock seconds to segment, describe and score one image, minimum over
// `repeats` runs.
double time_inference(const RsfiqaModel& model, const ImageTensor& image, std::size_t repeats);

std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace rsfiqa
