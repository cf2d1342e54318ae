#include "rsfiqa/segmentation.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "rsfiqa/error.hpp"

namespace rsfiqa {

std::size_t RawMask::area() const noexcept {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

std::size_t MaskSet::area(std::size_t region) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), static_cast<std::uint8_t>(region)));
}

std::vector<std::size_t> MaskSet::region_pixels(std::size_t region) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == region) out.push_back(i);
  return out;
}

std::vector<double> MaskSet::indicator(std::size_t region) const {
  std::vector<double> out(labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == region) out[i] = 1.0;
  return out;
}

MaskSet postprocess(std::span<const RawMask> raw, std::size_t max_regions, std::size_t height,
                    std::size_t width) {
  if (max_regions < 2) fail(ErrorCode::InvalidL, "L must be at least 2, got " + std::to_string(max_regions));
  if (max_regions > 255) fail(ErrorCode::InvalidL, "L must fit an 8-bit label map");
  const std::size_t n = height * width;
  for (const RawMask& m : raw) {
    if (m.height != height || m.width != width || m.pixels.size() != n) {
      fail(ErrorCode::ShapeMismatch, "raw mask extents do not match the image");
    }
  }

  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> areas(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) areas[i] = raw[i].area();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (raw[a].predicted_iou != raw[b].predicted_iou) return raw[a].predicted_iou > raw[b].predicted_iou;
    if (areas[a] != areas[b]) return areas[a] > areas[b];
    return a < b;
  });
  if (order.size() > max_regions - 1) order.resize(max_regions - 1);

  constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> owner(n, kUnassigned);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const RawMask& m = raw[order[rank]];
    for (std::size_t p = 0; p < n; ++p)
      if (m.pixels[p] && owner[p] == kUnassigned) owner[p] = rank;
  }

  // Relabel surviving masks densely in rank order.
  std::vector<std::size_t> counts(order.size(), 0);
  for (std::size_t o : owner)
    if (o != kUnassigned) ++counts[o];
  std::vector<std::size_t> relabel(order.size(), kUnassigned);
  MaskSet out;
  out.height = height;
  out.width = width;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (counts[rank] == 0) continue;
    relabel[rank] = out.scores.size();
    out.scores.push_back(raw[order[rank]].predicted_iou);
  }
  const std::size_t foreground = out.scores.size();
  const bool has_background = std::count(owner.begin(), owner.end(), kUnassigned) > 0;
  out.labels.resize(n);
  for (std::size_t p = 0; p < n; ++p)
    out.labels[p] = static_cast<std::uint8_t>(owner[p] == kUnassigned ? foreground : relabel[owner[p]]);
  if (has_background) {
    out.background_index = foreground;
    out.scores.push_back(0.0);
  }
  out.l_eff = out.scores.size();
  return out;
}

namespace {

constexpr std::size_t kFeatures = 5;

double squared_distance(const double* a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatures; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<RawMask> KMeansSegmenter::segment(const ImageTensor& image, std::size_t max_regions,
                                              std::uint64_t seed) const {
  if (max_regions < 2) fail(ErrorCode::InvalidL, "L must be at least 2, got " + std::to_string(max_regions));
  const std::size_t h = image.height(), w = image.width(), n = h * w;

  std::vector<double> features(n * kFeatures);
  std::set<std::array<double, 3>> colours;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      double* f = features.data() + p * kFeatures;
      for (std::size_t c = 0; c < 3; ++c) f[c] = image.at(y, x, c);
      f[3] = spatial_weight_ * (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      f[4] = spatial_weight_ * (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      colours.insert({f[0], f[1], f[2]});
    }
  }
  const std::size_t k = std::min(max_regions - 1, colours.size());

  // Farthest-point seeding; ties go to the lowest pixel index.
  std::mt19937_64 rng(seed);
  std::vector<double> centroids;
  centroids.reserve(k * kFeatures);
  const std::size_t first = static_cast<std::size_t>(rng() % n);
  centroids.insert(centroids.end(), features.begin() + first * kFeatures,
                   features.begin() + (first + 1) * kFeatures);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centroids.size() < k * kFeatures) {
    const double* last = centroids.data() + centroids.size() - kFeatures;
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t p = 0; p < n; ++p) {
      nearest[p] = std::min(nearest[p], squared_distance(features.data() + p * kFeatures, last));
      if (nearest[p] > best_d) {
        best_d = nearest[p];
        best = p;
      }
    }
    centroids.insert(centroids.end(), features.begin() + best * kFeatures,
                     features.begin() + (best + 1) * kFeatures);
  }

  std::vector<std::size_t> assign(n, 0);
  for (std::size_t iter = 0; iter <= max_iterations_; ++iter) {
    bool changed = iter == 0;
    for (std::size_t p = 0; p < n; ++p) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(features.data() + p * kFeatures, centroids.data() + c * kFeatures);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[p] != best) changed = true;
      assign[p] = best;
    }
    if (!changed) break;
    std::vector<double> sums(k * kFeatures, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      ++counts[assign[p]];
      for (std::size_t f = 0; f < kFeatures; ++f) sums[assign[p] * kFeatures + f] += features[p * kFeatures + f];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the old centroid; dropped below if still empty
      for (std::size_t f = 0; f < kFeatures; ++f)
        centroids[c * kFeatures + f] = sums[c * kFeatures + f] / static_cast<double>(counts[c]);
    }
  }

  std::vector<RawMask> out;
  for (std::size_t c = 0; c < k; ++c) {
    RawMask m{h, w, std::vector<std::uint8_t>(n, 0), 0.0, id()};
    double spread = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (assign[p] != c) continue;
      m.pixels[p] = 1;
      spread += squared_distance(features.data() + p * kFeatures, centroids.data() + c * kFeatures);
      ++count;
    }
    if (count == 0) continue;
    m.predicted_iou = 1.0 / (1.0 + 10.0 * spread / static_cast<double>(count));
    out.push_back(std::move(m));
  }
  std::stable_sort(out.begin(), out.end(), [](const RawMask& a, const RawMask& b) {
    if (a.predicted_iou != b.predicted_iou) return a.predicted_iou > b.predicted_iou;
    return a.area() > b.area();
  });
  return out;
}

std::vector<RawMask> fallback_segment(const ImageTensor& image, std::size_t max_regions,
                                      std::uint64_t seed) {
  return KMeansSegmenter().segment(image, max_regions, seed);
}

MaskPaths mask_paths(const std::filesystem::path& base) {
  return {std::filesystem::path(base.string() + ".mask.png"),
          std::filesystem::path(base.string() + ".mask.json")};
}

void save_mask(const MaskSet& mask, const std::filesystem::path& base) {
  const MaskPaths paths = mask_paths(base);
  write_gray_png({mask.height, mask.width, mask.labels}, paths.labels);
  nlohmann::json sidecar{
      {"l_eff", mask.l_eff},
      {"scores", mask.scores},
      {"background_index", mask.background_index ? static_cast<long long>(*mask.background_index) : -1},
      {"segmenter_id", mask.segmenter_id},
      {"seed", mask.seed},
  };
  std::ofstream out(paths.sidecar);
  if (!out) fail(ErrorCode::IoError, "cannot write " + paths.sidecar.string());
  // 17 significant digits round-trip every double.
  out << sidecar.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "short write to " + paths.sidecar.string());
}

MaskSet load_mask(const std::filesystem::path& base) {
  const MaskPaths paths = mask_paths(base);
  GrayImage labels = read_gray_png(paths.labels);
  std::ifstream in(paths.sidecar);
  if (!in) fail(ErrorCode::CorruptMaskFile, "mask sidecar missing: " + paths.sidecar.string());
  MaskSet out;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    out.l_eff = j.at("l_eff").get<std::size_t>();
    out.scores = j.at("scores").get<std::vector<double>>();
    const long long bg = j.at("background_index").get<long long>();
    if (bg >= 0) out.background_index = static_cast<std::size_t>(bg);
    out.segmenter_id = j.at("segmenter_id").get<std::string>();
    out.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptMaskFile, "bad mask sidecar " + paths.sidecar.string() + ": " + e.what());
  }
  if (out.scores.size() != out.l_eff || out.l_eff == 0) {
    fail(ErrorCode::CorruptMaskFile, "sidecar score count does not match l_eff");
  }
  if (out.background_index && *out.background_index != out.l_eff - 1) {
    fail(ErrorCode::CorruptMaskFile, "background must be the last region");
  }
  out.height = labels.height;
  out.width = labels.width;
  out.labels = std::move(labels.pixels);
  for (std::uint8_t v : out.labels) {
    if (v >= out.l_eff) {
      fail(ErrorCode::CorruptMaskFile, "label " + std::to_string(v) + " is outside l_eff = " + std::to_string(out.l_eff));
    }
  }
  return out;
}

}  // namespace rsfiqa
