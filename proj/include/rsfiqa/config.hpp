#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsfiqa/semantic_encoder.hpp"

namespace rsfiqa {

struct RunConfig {
  // model
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<std::size_t> channels{8, 16, 32, 32};  // one entry per backbone block (n)
  std::size_t regions = 5;                           // L
  std::size_t fused_channels = 32;                   // C
  std::size_t guide_channels = 16;                   // C_G
  std::size_t text_dim = 32;                         // d
  std::size_t max_tokens = 16;                       // T
  std::size_t vocab = 4096;                          // V
  double lambda_init = 0.1;
  std::size_t heads = 1;
  std::size_t mlp_hidden = 64;

  // training
  std::size_t batch_size = 8;
  double lr = 3e-4;
  double weight_decay = 1e-5;
  std::size_t t_max = 50;
  double eta_min = 0.0;
  double eta_max = -1.0;  // negative: use lr
  std::size_t epochs = 200;
  std::size_t patience = 30;  // 0 disables early stopping
  bool augment = true;        // random flips and transposes of training samples
  std::uint64_t seed = 0;
  std::array<double, 3> split{0.7, 0.1, 0.2};

  // providers
  std::string segmenter = "kmeans";
  std::string describer = "heuristic";  // or "remote"
  std::string text_encoder = "hashed";

  // ablation axes
  bool mhf = true;
  bool mllm = true;
  bool rsa_bias = true;
  std::array<bool, 5> dims{true, true, true, true, true};  // color, noise, artifact, blur, overall
  bool prompt_content = true;
  bool prompt_level = true;
  bool prompt_score = true;

  double peak_lr() const { return eta_max < 0.0 ? lr : eta_max; }
  DescriptionFields description_fields() const;

  // Assigns one dotted key ("model.regions") from its TOML text. InvalidConfig
  // for unknown keys or values of the wrong type.
  void set(const std::string& key, const std::string& value);
  // InvalidConfig when ratios do not sum to 1, L < 2 and so on.
  void validate() const;
  // Every key, grouped into sections; parse_config(to_toml()) round trips.
  std::string to_toml() const;
  static std::vector<std::string> keys();

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Flat TOML subset: [section] headers, key = value lines, # comments, strings,
// booleans, numbers and single-line arrays of numbers.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// "key=value" pairs applied in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments);

}  // namespace rsfiqa
