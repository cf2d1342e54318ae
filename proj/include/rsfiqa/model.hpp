#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsfiqa/backbone.hpp"
#include "rsfiqa/config.hpp"
#include "rsfiqa/dataset.hpp"
#include "rsfiqa/description.hpp"
#include "rsfiqa/mhf.hpp"
#include "rsfiqa/numerics/gradcheck.hpp"
#include "rsfiqa/regressor.hpp"
#include "rsfiqa/rsa.hpp"
#include "rsfiqa/segmentation.hpp"

namespace rsfiqa {

// One image with everything the model consumes precomputed.
struct PreparedSample {
  std::string image_id;
  ImageTensor image;  // at model resolution
  MaskSet mask;
  std::vector<RegionDescriptionRecord> records;  // one per region
  double mos = 0.0;  // raw scale
};

struct ForwardTrace {
  Var fused;     // Hn x Wn x C
  Var bias;      // undefined when the bias path is off
  Var attended;  // R
  Var score;     // {1}, in (0, 1)
};

class RsfiqaModel {
 public:
  // Parameters are drawn from config.seed.
  explicit RsfiqaModel(const RunConfig& config);
  RsfiqaModel(const RsfiqaModel&) = delete;
  RsfiqaModel& operator=(const RsfiqaModel&) = delete;

  ForwardTrace trace(const ImageTensor& image, const MaskSet& mask, std::span<const std::string> texts) const;
  Var forward(const ImageTensor& image, const MaskSet& mask, std::span<const std::string> texts) const {
    return trace(image, mask, texts).score;
  }
  Var forward(const PreparedSample& sample) const;
  // Region descriptions as composed under the config's prompt and dimension toggles.
  std::vector<std::string> region_texts(const PreparedSample& sample) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const RunConfig& config() const { return config_; }

 private:
  RunConfig config_;
  ParameterSet params_;
  std::unique_ptr<ConvBackbone> backbone_;
  std::unique_ptr<MultiScaleFusion> mhf_;
  std::unique_ptr<HashedTextEncoder> text_;
  std::unique_ptr<RegionSemanticAttention> rsa_;
  std::unique_ptr<QualityHead> head_;
};

// Segmenter, describer and optional on-disk caches for sample preparation.
struct Providers {
  std::unique_ptr<Segmenter> segmenter;
  std::unique_ptr<Describer> describer;
  std::unique_ptr<DescriptionCache> cache;  // may be null
  std::optional<std::filesystem::path> mask_dir;
};

// Heuristic or remote describer per config. With a work_dir, masks go to
// <work_dir>/masks and descriptions to <work_dir>/descriptions.jsonl.
Providers make_providers(const RunConfig& config, const std::filesystem::path& work_dir = {});

// Loads and resizes the image, segments it (or reuses a saved mask) and
// describes every region through the cache.
PreparedSample prepare_sample(const RunConfig& config, const DatasetRecord& record, const Providers& providers);
PreparedSample prepare_image(const RunConfig& config, const std::string& image_id, const ImageTensor& image,
                             double mos, const Providers& providers);
// Runs prepare_sample over the index on a bounded worker pool; output order
// follows the index.
std::vector<PreparedSample> prepare_samples(const RunConfig& config, const DatasetIndex& index,
                                            const Providers& providers, std::size_t workers = 0);

// Config used for the full-model gradient check: 16x16 input, n = 3, L = 3,
// C = 8, C_G = 8, d = 8.
RunConfig gradcheck_config(std::uint64_t seed);

struct ModelGradCheck {
  GradCheckResult result;
  std::size_t parameter_groups = 0;
  double seconds = 0.0;
};

// Central differences over every parameter of the full model on synthetic
// inputs, loss = mean squared error against fixed targets.
ModelGradCheck run_model_gradcheck(std::uint64_t seed, double epsilon = 1e-4, std::size_t samples_per_parameter = 4);

}  // namespace rsfiqa
