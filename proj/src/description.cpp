#include "rsfiqa/description.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "rsfiqa/error.hpp"

namespace rsfiqa {

namespace {

constexpr std::array<std::string_view, 5> kDimensionNames{"color", "noise", "artifact", "blur", "overall"};
constexpr std::array<std::string_view, 5> kLevelNames{"bad", "poor", "fair", "good", "excellent"};

constexpr std::string_view kContentPrompt =
    "Please describe the content of the highlighted area in the mask image based on the original image context.";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_score(double score) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, score);
  return std::string(buf, end);
}

std::string assistant_prefix(PromptKind kind, Dimension dim) {
  return "From the " + std::string(dimension_name(dim)) + " dimension, the image quality " +
         (kind == PromptKind::Level ? "level" : "score") + " is ";
}

[[noreturn]] void unparseable(std::string_view text, const std::string& why) {
  std::string shown(text.substr(0, 120));
  fail(ErrorCode::UnparseableResponse, why + ": \"" + shown + "\"");
}

}  // namespace

std::string_view dimension_name(Dimension dim) { return kDimensionNames[static_cast<std::size_t>(dim)]; }

std::optional<Dimension> parse_dimension(std::string_view name) {
  for (std::size_t i = 0; i < kDimensionNames.size(); ++i)
    if (kDimensionNames[i] == name) return static_cast<Dimension>(i);
  return std::nullopt;
}

std::string_view level_name(QualityLevel level) { return kLevelNames[static_cast<std::size_t>(level)]; }

std::optional<QualityLevel> parse_level(std::string_view word) {
  std::string lower(word);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (std::size_t i = 0; i < kLevelNames.size(); ++i)
    if (kLevelNames[i] == lower) return static_cast<QualityLevel>(i);
  return std::nullopt;
}

QualityLevel level_for_score(double score) {
  const double k = std::floor(std::clamp(score, 0.0, 100.0) / 20.0);
  return static_cast<QualityLevel>(std::min(4, static_cast<int>(k)));
}

bool RegionDescriptionRecord::consistent() const {
  for (const auto& d : dims) {
    if (!(d.score >= 0.0 && d.score <= 100.0)) return false;
    if (level_for_score(d.score) != d.level) return false;
  }
  return true;
}

std::string format_prompt(PromptKind kind, Dimension dim) {
  switch (kind) {
    case PromptKind::Content:
      return std::string(kContentPrompt);
    case PromptKind::Level:
      return "From the " + std::string(dimension_name(dim)) +
             " dimension, please provide the quality level for highlighted area in the mask image.";
    case PromptKind::Score:
      return "From the " + std::string(dimension_name(dim)) +
             " dimension, please provide the quality score for highlighted area in the mask image.";
  }
  return {};
}

std::string render_response(PromptKind kind, Dimension dim, const ResponsePayload& payload) {
  switch (kind) {
    case PromptKind::Content:
      return std::get<std::string>(payload) + ".";
    case PromptKind::Level:
      return assistant_prefix(kind, dim) + std::string(level_name(std::get<QualityLevel>(payload))) + ".";
    case PromptKind::Score:
      return assistant_prefix(kind, dim) + format_score(std::get<double>(payload)) + ".";
  }
  return {};
}

ResponsePayload parse_response(PromptKind kind, Dimension dim, std::string_view text) {
  const std::string_view body = trim(text);
  if (body.size() < 2 || body.back() != '.') unparseable(text, "response must be one sentence ending in '.'");
  const std::string_view stem = body.substr(0, body.size() - 1);
  if (kind == PromptKind::Content) {
    if (trim(stem).empty()) unparseable(text, "empty content");
    return std::string(stem);
  }
  const std::string prefix = assistant_prefix(kind, dim);
  if (stem.substr(0, prefix.size()) != prefix) unparseable(text, "response does not follow the answer template");
  const std::string_view value = stem.substr(prefix.size());
  if (kind == PromptKind::Level) {
    auto level = parse_level(value);
    if (!level) unparseable(text, "unknown quality level");
    return *level;
  }
  double score = 0.0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), score);
  if (ec != std::errc() || end != value.data() + value.size()) unparseable(text, "score is not a number");
  if (!(score >= 0.0 && score <= 100.0)) unparseable(text, "score outside [0, 100]");
  return score;
}

// ---- heuristic provider ----

namespace {

struct Luma {
  std::size_t h, w;
  std::vector<double> v;
  double at(std::ptrdiff_t y, std::ptrdiff_t x) const {
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return v[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
};

Luma luminance(const ImageTensor& image) {
  Luma l{image.height(), image.width(), std::vector<double>(image.height() * image.width())};
  for (std::size_t y = 0; y < l.h; ++y)
    for (std::size_t x = 0; x < l.w; ++x)
      l.v[y * l.w + x] = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
  return l;
}

double variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size());
}

std::string colour_bucket(const std::array<double, 3>& rgb) {
  struct Proto {
    const char* name;
    double r, g, b;
  };
  static constexpr Proto protos[] = {
      {"black", 0, 0, 0},   {"white", 1, 1, 1},   {"gray", 0.5, 0.5, 0.5}, {"red", 0.8, 0.15, 0.15},
      {"green", 0.2, 0.7, 0.2}, {"blue", 0.15, 0.25, 0.8}, {"yellow", 0.9, 0.85, 0.2}, {"cyan", 0.2, 0.8, 0.85},
      {"magenta", 0.8, 0.2, 0.8}, {"orange", 0.95, 0.55, 0.1}, {"brown", 0.5, 0.3, 0.15},
  };
  const Proto* best = &protos[0];
  double best_d = 1e9;
  for (const Proto& p : protos) {
    const double d = (rgb[0] - p.r) * (rgb[0] - p.r) + (rgb[1] - p.g) * (rgb[1] - p.g) + (rgb[2] - p.b) * (rgb[2] - p.b);
    if (d < best_d) {
      best_d = d;
      best = &p;
    }
  }
  return best->name;
}

}  // namespace

RegionStatistics region_statistics(const ImageTensor& image, const MaskSet& mask, std::size_t region) {
  if (mask.height != image.height() || mask.width != image.width()) {
    fail(ErrorCode::ShapeMismatch, "mask and image extents differ");
  }
  const auto pixels = mask.region_pixels(region);
  if (pixels.empty()) fail(ErrorCode::EmptyRegion, "region " + std::to_string(region) + " is empty");
  const Luma luma = luminance(image);
  const std::size_t w = luma.w;

  RegionStatistics st;
  std::vector<double> lap, rg, yb;
  lap.reserve(pixels.size());
  double residual = 0.0;
  for (std::size_t p : pixels) {
    const auto y = static_cast<std::ptrdiff_t>(p / w), x = static_cast<std::ptrdiff_t>(p % w);
    lap.push_back(luma.at(y - 1, x) + luma.at(y + 1, x) + luma.at(y, x - 1) + luma.at(y, x + 1) - 4.0 * luma.at(y, x));
    std::array<double, 9> win;
    std::size_t k = 0;
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) win[k++] = luma.at(y + dy, x + dx);
    std::nth_element(win.begin(), win.begin() + 4, win.end());
    const double r = luma.at(y, x) - win[4];
    residual += r * r;
    const double cr = image.at(p / w, p % w, 0), cg = image.at(p / w, p % w, 1), cb = image.at(p / w, p % w, 2);
    rg.push_back(cr - cg);
    yb.push_back(0.5 * (cr + cg) - cb);
    st.mean_rgb[0] += cr;
    st.mean_rgb[1] += cg;
    st.mean_rgb[2] += cb;
  }
  const double n = static_cast<double>(pixels.size());
  for (double& c : st.mean_rgb) c /= n;
  st.laplacian_variance = variance(lap);
  st.median_residual_energy = residual / n;
  double mrg = 0.0, myb = 0.0;
  for (std::size_t i = 0; i < rg.size(); ++i) {
    mrg += rg[i];
    myb += yb[i];
  }
  mrg /= n;
  myb /= n;
  st.colorfulness = std::sqrt(variance(rg) + variance(yb)) + 0.3 * std::sqrt(mrg * mrg + myb * myb);

  // Neighbour differences inside the region, split by whether they straddle the 8-pixel grid.
  double edge_sum = 0.0, inner_sum = 0.0;
  std::size_t edge_n = 0, inner_n = 0;
  auto visit = [&](std::size_t a, std::size_t b, bool on_grid) {
    if (mask.labels[a] != region || mask.labels[b] != region) return;
    const double d = std::abs(luma.v[a] - luma.v[b]);
    if (on_grid) {
      edge_sum += d;
      ++edge_n;
    } else {
      inner_sum += d;
      ++inner_n;
    }
  };
  for (std::size_t y = 0; y < luma.h; ++y)
    for (std::size_t x = 0; x + 1 < w; ++x) visit(y * w + x, y * w + x + 1, (x + 1) % 8 == 0);
  for (std::size_t y = 0; y + 1 < luma.h; ++y)
    for (std::size_t x = 0; x < w; ++x) visit(y * w + x, (y + 1) * w + x, (y + 1) % 8 == 0);
  if (edge_n > 0 && inner_n > 0) {
    st.blockiness_ratio = (edge_sum / static_cast<double>(edge_n) + 1e-3) / (inner_sum / static_cast<double>(inner_n) + 1e-3);
  }
  st.area_fraction = n / static_cast<double>(mask.pixel_count());
  return st;
}

RegionDescriptionRecord HeuristicDescriber::describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                                     const std::string& image_id) const {
  const RegionStatistics st = region_statistics(image, mask, region);
  RegionDescriptionRecord rec;
  rec.image_id = image_id;
  rec.region_index = region;
  const double blur = 100.0 * (1.0 - std::exp(-st.laplacian_variance / 0.01));
  const double noise = 100.0 * std::exp(-st.median_residual_energy / 0.002);
  const double color = 100.0 * (1.0 - std::exp(-st.colorfulness / 0.25));
  const double artifact = 100.0 * std::exp(-std::max(0.0, st.blockiness_ratio - 1.0) / 2.0);
  const double overall = (blur + noise + color + artifact) / 4.0;
  auto set = [&](Dimension d, double s) { rec[d] = {level_for_score(s), s}; };
  set(Dimension::Color, color);
  set(Dimension::Noise, noise);
  set(Dimension::Artifact, artifact);
  set(Dimension::Blur, blur);
  set(Dimension::Overall, overall);
  const bool background = mask.background_index == region;
  rec.content = std::string(background ? "background" : "region") + " " + std::to_string(region) + " covering " +
                std::to_string(static_cast<int>(std::lround(100.0 * st.area_fraction))) +
                " percent of the image with mostly " + colour_bucket(st.mean_rgb) + " tones";
  return rec;
}

RegionDescriptionRecord heuristic_describe(const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                           const std::string& image_id) {
  return HeuristicDescriber().describe(image, mask, region, image_id);
}

ImageTensor highlight_overlay(const ImageTensor& image, const MaskSet& mask, std::size_t region) {
  Tensor px = image.pixels();
  const std::size_t w = image.width();
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    if (mask.labels[p] == region) continue;
    for (std::size_t c = 0; c < 3; ++c) px.at(p / w, p % w, c) *= 0.25;
  }
  return ImageTensor(std::move(px));
}

// ---- cache ----

namespace {

nlohmann::json record_to_json(const RegionDescriptionRecord& rec, const std::string& provider_id) {
  nlohmann::json levels = nlohmann::json::object(), scores = nlohmann::json::object();
  for (Dimension d : kDimensions) {
    levels[std::string(dimension_name(d))] = level_name(rec[d].level);
    scores[std::string(dimension_name(d))] = rec[d].score;
  }
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {{"image_id", rec.image_id}, {"region_index", rec.region_index}, {"content", rec.content},
          {"levels", levels},         {"scores", scores},                 {"provider_id", provider_id},
          {"timestamp", stamp}};
}

RegionDescriptionRecord record_from_json(const nlohmann::json& j) {
  RegionDescriptionRecord rec;
  rec.image_id = j.at("image_id").get<std::string>();
  rec.region_index = j.at("region_index").get<std::size_t>();
  rec.content = j.at("content").get<std::string>();
  for (Dimension d : kDimensions) {
    const std::string name(dimension_name(d));
    auto level = parse_level(j.at("levels").at(name).get<std::string>());
    if (!level) throw std::invalid_argument("unknown level");
    rec[d] = {*level, j.at("scores").at(name).get<double>()};
  }
  if (!rec.consistent()) throw std::invalid_argument("level and score disagree");
  return rec;
}

}  // namespace

DescriptionCache::DescriptionCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // a missing cache is an empty cache
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RegionDescriptionRecord rec = record_from_json(j);
      Key key{rec.image_id, rec.region_index, j.at("provider_id").get<std::string>()};
      records_[key] = std::move(rec);
    } catch (const std::exception& e) {
      ++corrupt_lines_;
      std::cerr << "warning: " << error_name(ErrorCode::CorruptCacheLine) << ": skipped line " << line_no << " of "
                << path_.string() << "\n";
    }
  }
}

std::optional<RegionDescriptionRecord> DescriptionCache::get(const std::string& image_id, std::size_t region,
                                                             const std::string& provider_id) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(Key{image_id, region, provider_id});
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void DescriptionCache::put(const RegionDescriptionRecord& record, const std::string& provider_id) {
  const std::string line = record_to_json(record, provider_id).dump();
  std::lock_guard lock(mutex_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) fail(ErrorCode::IoError, "cannot append to " + path_.string());
  out << line << '\n';
  out.flush();
  if (!out) fail(ErrorCode::IoError, "short write to " + path_.string());
  records_[Key{record.image_id, record.region_index, provider_id}] = record;
}

std::size_t DescriptionCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

RegionDescriptionRecord describe_region(const Describer& describer, DescriptionCache* cache,
                                        const ImageTensor& image, const MaskSet& mask, std::size_t region,
                                        const std::string& image_id) {
  const std::string provider = describer.id();
  if (cache) {
    if (auto hit = cache->get(image_id, region, provider)) return *hit;
  }
  RegionDescriptionRecord rec = describer.describe(image, mask, region, image_id);
  if (cache) cache->put(rec, provider);
  return rec;
}

}  // namespace rsfiqa
