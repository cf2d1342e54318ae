#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "rsfiqa/image.hpp"
#include "rsfiqa/segmentation.hpp"

namespace rsfiqa {

// Canonical order: color, noise, artifact, blur, overall.
enum class Dimension : std::uint8_t { Color, Noise, Artifact, Blur, Overall };
inline constexpr std::array<Dimension, 5> kDimensions{Dimension::Color, Dimension::Noise, Dimension::Artifact,
                                                      Dimension::Blur, Dimension::Overall};
std::string_view dimension_name(Dimension dim);
std::optional<Dimension> parse_dimension(std::string_view name);

enum class QualityLevel : std::uint8_t { Bad, Poor, Fair, Good, Excellent };
std::string_view level_name(QualityLevel level);
std::optional<QualityLevel> parse_level(std::string_view word);
// Quintiles: [0, 20) bad ... [80, 100] excellent.
QualityLevel level_for_score(double score);

struct DimensionAssessment {
  QualityLevel level = QualityLevel::Bad;
  double score = 0.0;  // [0, 100]
  friend bool operator==(const DimensionAssessment&, const DimensionAssessment&) = default;
};

struct RegionDescriptionRecord {
  std::string image_id;
  std::size_t region_index = 0;
  std::string content;
  std::array<DimensionAssessment, 5> dims{};  // indexed by Dimension

  DimensionAssessment& operator[](Dimension d) { return dims[static_cast<std::size_t>(d)]; }
  const DimensionAssessment& operator[](Dimension d) const { return dims[static_cast<std::size_t>(d)]; }
  // Scores in range and levels on their quintile.
  bool consistent() const;
  friend bool operator==(const RegionDescriptionRecord&, const RegionDescriptionRecord&) = default;
};

enum class PromptKind : std::uint8_t { Content, Level, Score };
using ResponsePayload = std::variant<std::string, QualityLevel, double>;

// User turn. `dim` is ignored for Content.
std::string format_prompt(PromptKind kind, Dimension dim);
// Assistant turn in the expected template.
std::string render_response(PromptKind kind, Dimension dim, const ResponsePayload& payload);
// Inverse of render_response. Surrounding whitespace is ignored. Throws
// UnparseableResponse on template mismatch, unknown level word or a score
// outside [0, 100].
ResponsePayload parse_response(PromptKind kind, Dimension dim, std::string_view text);

class Describer {
 public:
  virtual ~Describer() = default;
  virtual std::string id() const = 0;
  virtual RegionDescriptionRecord describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                           const std::string& image_id) const = 0;
};

// Raw region statistics behind the heuristic scores, exposed for tests.
struct RegionStatistics {
  double laplacian_variance = 0.0;
  double median_residual_energy = 0.0;
  double colorfulness = 0.0;
  double blockiness_ratio = 1.0;
  double area_fraction = 0.0;
  std::array<double, 3> mean_rgb{};
};
RegionStatistics region_statistics(const ImageTensor& image, const MaskSet& mask, std::size_t region);

// Deterministic stand-in for the MLLM. Calibration:
//   blur     = 100 (1 - exp(-laplacian_variance / 0.01))
//   noise    = 100 exp(-median_residual_energy / 0.002)
//   color    = 100 (1 - exp(-colorfulness / 0.25))
//   artifact = 100 exp(-max(0, blockiness_ratio - 1) / 2)
//   overall  = mean of the four
class HeuristicDescriber final : public Describer {
 public:
  std::string id() const override { return "heuristic-v1"; }
  RegionDescriptionRecord describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                   const std::string& image_id) const override;
};

RegionDescriptionRecord heuristic_describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                           const std::string& image_id = "");

struct RemoteEndpoint {
  std::string url;  // http(s)://host[:port]/path
  std::string api_key;
  std::string model = "qwen2.5-vl";
  int max_retries = 3;  // retries after the first attempt
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{60};

  // RSFIQA_MLLM_ENDPOINT and RSFIQA_MLLM_API_KEY; InvalidConfig when unset.
  static RemoteEndpoint from_env();
};

struct AttemptRecord {
  PromptKind kind;
  Dimension dim;
  int attempt;  // 1-based
  int http_status;  // 0 on transport failure
  std::string outcome;  // "ok", "transient", "unparseable", ...
};

// Chat-completion client. Each region costs eleven requests: one content
// turn and a level and a score turn per dimension. The full image and an
// overlay with the region highlighted go with every turn.
class RemoteDescriber final : public Describer {
 public:
  explicit RemoteDescriber(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string id() const override { return "remote:" + endpoint_.model; }
  RegionDescriptionRecord describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                   const std::string& image_id) const override;

  std::vector<AttemptRecord> attempts() const;
  // Level answers that disagreed with the score's quintile and were replaced.
  std::size_t level_overrides() const;

 private:
  std::string ask(PromptKind kind, Dimension dim, const std::string& image_png,
                  const std::string& overlay_png) const;

  RemoteEndpoint endpoint_;
  mutable std::mutex mutex_;
  mutable std::vector<AttemptRecord> attempts_;
  mutable std::size_t level_overrides_ = 0;
};

RegionDescriptionRecord remote_describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                        const RemoteEndpoint& endpoint, const std::string& image_id = "");

// Region shown at full brightness, everything else dimmed to 25%.
ImageTensor highlight_overlay(const ImageTensor& image, const MaskSet& mask, std::size_t region);

// Append-only JSONL store keyed by (image_id, region_index, provider_id).
// Later lines win. Unreadable lines are skipped, counted and reported on
// stderr.
class DescriptionCache {
 public:
  explicit DescriptionCache(std::filesystem::path path);

  std::optional<RegionDescriptionRecord> get(const std::string& image_id, std::size_t region,
                                             const std::string& provider_id) const;
  void put(const RegionDescriptionRecord& record, const std::string& provider_id);
  std::size_t size() const;
  std::size_t corrupt_lines() const { return corrupt_lines_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  using Key = std::tuple<std::string, std::size_t, std::string>;
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<Key, RegionDescriptionRecord> records_;
  std::size_t corrupt_lines_ = 0;
};

// Consults the cache before calling the provider and stores fresh results.
RegionDescriptionRecord describe_region(const Describer& describer, DescriptionCache* cache,
                                        const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                        const std::string& image_id);

}  // namespace rsfiqa
