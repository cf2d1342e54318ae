#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsfiqa/image.hpp"

namespace rsfiqa {

// One candidate region from a segmenter.
struct RawMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // 0 / 1, row-major
  double predicted_iou = 0.0;
  std::string source;

  std::size_t area() const noexcept;
};

// Non-overlapping partition of the image into l_eff regions. Foreground
// regions are ordered by descending score; the uncovered remainder, when
// non-empty, is the last region.
struct MaskSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;
  std::size_t l_eff = 0;
  std::vector<double> scores;
  std::optional<std::size_t> background_index;
  std::string segmenter_id;
  std::uint64_t seed = 0;

  std::size_t pixel_count() const noexcept { return labels.size(); }
  std::size_t area(std::size_t region) const;
  std::vector<std::size_t> region_pixels(std::size_t region) const;
  // 1.0 inside the region, 0.0 elsewhere.
  std::vector<double> indicator(std::size_t region) const;

  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

// Keeps the (L - 1) best masks by predicted IoU (ties: larger area, then
// lower input index), gives each contested pixel to the best-ranked mask,
// drops masks emptied by that, and gathers uncovered pixels into a
// background region. Throws InvalidL for L < 2 and ShapeMismatch when a mask
// does not match height x width.
MaskSet postprocess(std::span<const RawMask> raw, std::size_t max_regions, std::size_t height,
                    std::size_t width);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string id() const = 0;
  virtual std::vector<RawMask> segment(const ImageTensor& image, std::size_t max_regions,
                                       std::uint64_t seed) const = 0;
};

// k-means over (r, g, b, αx, αy) with k = L - 1, x and y normalised to
// [0, 1]. Deterministic farthest-point seeding from `seed`. The cluster
// count is capped by the number of distinct colours, so flat images yield
// fewer masks. Scores are compactness 1 / (1 + 10 * mean squared distance
// to the centroid), which lies in (0, 1].
class KMeansSegmenter final : public Segmenter {
 public:
  explicit KMeansSegmenter(double spatial_weight = 0.5, std::size_t max_iterations = 50)
      : spatial_weight_(spatial_weight), max_iterations_(max_iterations) {}

  std::string id() const override { return "kmeans-fallback"; }
  std::vector<RawMask> segment(const ImageTensor& image, std::size_t max_regions,
                               std::uint64_t seed) const override;

 private:
  double spatial_weight_;
  std::size_t max_iterations_;
};

std::vector<RawMask> fallback_segment(const ImageTensor& image, std::size_t max_regions,
                                      std::uint64_t seed);

// Label map PNG at <base>.mask.png and JSON sidecar at <base>.mask.json.
struct MaskPaths {
  std::filesystem::path labels;
  std::filesystem::path sidecar;
};
MaskPaths mask_paths(const std::filesystem::path& base);

void save_mask(const MaskSet& mask, const std::filesystem::path& base);
// IoError when the label PNG cannot be read; CorruptMaskFile when the sidecar
// is missing or malformed or a label is out of range.
MaskSet load_mask(const std::filesystem::path& base);

}  // namespace rsfiqa
