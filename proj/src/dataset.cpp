#include "rsfiqa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <map>
#include <set>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// Separable Gaussian with clamped borders.
Tensor gaussian_blur(const Tensor& px, double sigma) {
  const std::size_t h = px.dim(0), w = px.dim(1);
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;
  auto clampi = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  Tensor tmp({h, w, 3}, 0.0), out({h, w, 3}, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k)
          s += kernel[static_cast<std::size_t>(k + radius)] * px.at(y, clampi(static_cast<std::ptrdiff_t>(x) + k, w), c);
        tmp.at(y, x, c) = s;
      }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k)
          s += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(clampi(static_cast<std::ptrdiff_t>(y) + k, h), x, c);
        out.at(y, x, c) = s;
      }
  return out;
}

constexpr double kPalette[][3] = {
    {0.85, 0.20, 0.15}, {0.15, 0.60, 0.25}, {0.20, 0.35, 0.85}, {0.90, 0.80, 0.20},
    {0.55, 0.25, 0.70}, {0.10, 0.70, 0.75}, {0.95, 0.55, 0.15}, {0.80, 0.25, 0.60},
};

struct Layout {
  std::vector<std::uint8_t> labels;
  Tensor clean;
  std::size_t regions = 0;
};

Layout make_layout(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t regions = 2 + rng() % 3;
  const std::size_t n = size * size;
  Layout l{std::vector<std::uint8_t>(n, 0), Tensor({size, size, 3}, 0.0), regions};

  // Shapes may overlap; redraw the whole arrangement until every region keeps
  // a visible share, so each strength in the MOS is actually observable.
  for (int layout_attempt = 0;; ++layout_attempt) {
    std::fill(l.labels.begin(), l.labels.end(), std::uint8_t{0});
    for (std::size_t r = 1; r < regions; ++r) {
      const double cy = 0.2 + 0.6 * u(rng), cx = 0.2 + 0.6 * u(rng), ry = 0.18 + 0.17 * u(rng),
                   rx = 0.18 + 0.17 * u(rng);
      const bool ellipse = rng() % 2 == 0;
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double dy = ((static_cast<double>(y) + 0.5) / static_cast<double>(size) - cy) / ry;
          const double dx = ((static_cast<double>(x) + 0.5) / static_cast<double>(size) - cx) / rx;
          if (ellipse ? dx * dx + dy * dy <= 1.0 : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0)) {
            l.labels[y * size + x] = static_cast<std::uint8_t>(r);
          }
        }
    }
    std::vector<std::size_t> area(regions, 0);
    for (std::uint8_t v : l.labels) ++area[v];
    if (*std::min_element(area.begin(), area.end()) * 10 >= n || layout_attempt == 99) break;
  }

  // Distinct palette colours with a per-region stripe texture.
  std::vector<std::size_t> colours(std::size(kPalette));
  for (std::size_t i = 0; i < colours.size(); ++i) colours[i] = i;
  std::shuffle(colours.begin(), colours.end(), rng);
  struct Texture {
    double fy, fx, phase, amplitude;
  };
  std::vector<Texture> tex;
  for (std::size_t r = 0; r < regions; ++r) {
    const double period = 3.0 + 5.0 * u(rng), angle = std::numbers::pi * u(rng);
    tex.push_back({std::sin(angle) / period, std::cos(angle) / period, 2.0 * std::numbers::pi * u(rng), 0.1});
  }
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t r = l.labels[y * size + x];
      const Texture& t = tex[r];
      const double wave = t.amplitude * std::sin(2.0 * std::numbers::pi * (t.fy * static_cast<double>(y) + t.fx * static_cast<double>(x)) + t.phase);
      for (std::size_t c = 0; c < 3; ++c) l.clean.at(y, x, c) = std::clamp(kPalette[colours[r]][c] + wave, 0.0, 1.0);
    }
  return l;
}

SyntheticSample render(std::size_t size, std::uint64_t seed, const std::vector<RegionDistortion>* fixed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  Layout layout = make_layout(size, rng);
  std::vector<RegionDistortion> regions;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t r = 0; r < layout.regions; ++r) {
    RegionDistortion d;
    d.strength = u(rng);
    regions.push_back(d);
  }
  if (fixed) {
    if (fixed->size() != layout.regions) {
      fail(ErrorCode::ShapeMismatch, "layout has " + std::to_string(layout.regions) + " regions, got " +
                                         std::to_string(fixed->size()) + " distortions");
    }
    regions = *fixed;
  }
  const ImageTensor clean(layout.clean);
  Tensor out = layout.clean;
  for (std::size_t r = 0; r < layout.regions; ++r) {
    ImageTensor distorted = clean;
    for (DistortionKind kind : regions[r].kinds) distorted = apply_distortion(distorted, kind, regions[r].strength, rng);
    for (std::size_t p = 0; p < layout.labels.size(); ++p) {
      if (layout.labels[p] != r) continue;
      for (std::size_t c = 0; c < 3; ++c) out[p * 3 + c] = distorted.pixels()[p * 3 + c];
    }
  }
  return {clean, ImageTensor(out), std::move(layout.labels), regions, synthetic_mos(regions)};
}

}  // namespace

std::string_view distortion_name(DistortionKind kind) {
  static constexpr std::string_view names[] = {"blur", "noise", "desaturate", "block"};
  return names[static_cast<std::size_t>(kind)];
}

double synthetic_mos(const std::vector<RegionDistortion>& regions) {
  if (regions.empty()) fail(ErrorCode::EmptyInput, "no regions");
  double mean = 0.0;
  for (const auto& r : regions) mean += r.strength;
  mean /= static_cast<double>(regions.size());
  return 1.0 + 4.0 * (1.0 - mean);
}

ImageTensor apply_distortion(const ImageTensor& image, DistortionKind kind, double s, std::mt19937_64& rng) {
  if (!(s >= 0.0 && s <= 1.0)) fail(ErrorCode::InvalidConfig, "distortion strength must lie in [0, 1]");
  Tensor px = image.pixels();
  const std::size_t h = image.height(), w = image.width();
  switch (kind) {
    case DistortionKind::Blur:
      if (s > 0.0) px = gaussian_blur(px, 2.5 * s);
      break;
    case DistortionKind::Noise: {
      std::normal_distribution<double> noise(0.0, 1.0);
      for (double& v : px.data()) v = std::clamp(v + 0.2 * s * noise(rng), 0.0, 1.0);
      break;
    }
    case DistortionKind::Desaturate:
      for (std::size_t p = 0; p < h * w; ++p) {
        double* c = px.ptr() + p * 3;
        const double luma = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
        for (std::size_t k = 0; k < 3; ++k) c[k] += s * (luma - c[k]);
      }
      break;
    case DistortionKind::Block:
      for (std::size_t by = 0; by < h; by += 8)
        for (std::size_t bx = 0; bx < w; bx += 8) {
          const std::size_t ey = std::min(h, by + 8), ex = std::min(w, bx + 8);
          for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t y = by; y < ey; ++y)
              for (std::size_t x = bx; x < ex; ++x) mean += px.at(y, x, c);
            mean /= static_cast<double>((ey - by) * (ex - bx));
            for (std::size_t y = by; y < ey; ++y)
              for (std::size_t x = bx; x < ex; ++x) px.at(y, x, c) = (1.0 - s) * px.at(y, x, c) + s * mean;
          }
        }
      break;
  }
  for (double& v : px.data()) v = std::clamp(v, 0.0, 1.0);
  return ImageTensor(std::move(px));
}

SyntheticSample generate_synthetic_sample(std::size_t size, std::uint64_t seed) { return render(size, seed, nullptr); }

SyntheticSample generate_synthetic_sample(std::size_t size, std::uint64_t seed,
                                          const std::vector<RegionDistortion>& regions) {
  return render(size, seed, &regions);
}

DatasetIndex make_synthetic_dataset(std::size_t count, std::uint64_t seed, const fs::path& out_dir, std::size_t size) {
  if (count < 2) fail(ErrorCode::TooFewSamples, "a synthetic dataset needs at least two images");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  DatasetIndex index;
  index.provenance = Provenance::Synthetic;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.png", i);
    const SyntheticSample s = generate_synthetic_sample(size, seed * 1000003ull + i);
    write_png(s.image, out_dir / name);
    index.records.push_back({name, out_dir / name, s.mos});
  }
  write_dataset_csv(index, out_dir / "dataset.csv");
  return index;
}

void write_dataset_csv(const DatasetIndex& index, const fs::path& csv) {
  std::ofstream out(csv);
  if (!out) fail(ErrorCode::IoError, "cannot write " + csv.string());
  out << "image_path,mos\n";
  for (const auto& r : index.records) out << r.image_id << ',' << shortest(r.mos) << '\n';
  if (!out) fail(ErrorCode::IoError, "short write to " + csv.string());
}

DatasetIndex load_dataset(const fs::path& csv, const fs::path& images_dir) {
  std::ifstream in(csv);
  if (!in) fail(ErrorCode::IoError, "cannot read " + csv.string());
  const fs::path root = images_dir.empty() ? csv.parent_path() : images_dir;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "image_path,mos") {
    fail(ErrorCode::MalformedCsv, csv.string() + ":1: expected header 'image_path,mos'");
  }
  DatasetIndex index;
  std::set<std::string> seen;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const std::string where = csv.string() + ":" + std::to_string(line_no) + ": ";
    const auto comma = row.rfind(',');
    if (comma == std::string_view::npos) fail(ErrorCode::MalformedCsv, where + "expected image_path,mos");
    const std::string rel(trim(row.substr(0, comma)));
    const std::string_view num = trim(row.substr(comma + 1));
    double mos = 0.0;
    auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), mos);
    if (rel.empty() || ec != std::errc() || end != num.data() + num.size() || !std::isfinite(mos)) {
      fail(ErrorCode::MalformedCsv, where + "bad row '" + std::string(row) + "'");
    }
    if (!seen.insert(rel).second) fail(ErrorCode::MalformedCsv, where + "duplicate image_path " + rel);
    const fs::path path = fs::path(rel).is_absolute() ? fs::path(rel) : root / rel;
    if (!fs::is_regular_file(path)) fail(ErrorCode::MissingImage, "image not found: " + path.string());
    index.records.push_back({rel, path, mos});
  }
  return index;
}

DatasetSplit split_dataset(const DatasetIndex& index, const std::array<double, 3>& ratios, std::uint64_t seed) {
  const std::size_t n = index.size();
  const auto share = [n](double r) { return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_train = share(ratios[0]), n_val = share(ratios[1]);
  if (n_train + n_val > n) fail(ErrorCode::InvalidConfig, "split ratios exceed 1");
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || (ratios[1] > 0.0 && n_val == 0) || (ratios[2] > 0.0 && n_test == 0)) {
    fail(ErrorCode::TooFewSamples, std::to_string(n) + " records cannot fill every split");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit out;
  out.train.provenance = out.val.provenance = out.test.provenance = index.provenance;
  for (std::size_t i = 0; i < n; ++i) {
    DatasetIndex& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.records.push_back(index.records[order[i]]);
  }
  return out;
}

DatasetSplit split_from_file(const DatasetIndex& index, const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) fail(ErrorCode::IoError, "cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "image_path,split") {
    fail(ErrorCode::MalformedCsv, csv.string() + ":1: expected header 'image_path,split'");
  }
  std::map<std::string, std::string> assigned;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const std::string where = csv.string() + ":" + std::to_string(line_no) + ": ";
    const auto comma = row.rfind(',');
    if (comma == std::string_view::npos) fail(ErrorCode::MalformedCsv, where + "expected image_path,split");
    const std::string id(trim(row.substr(0, comma)));
    const std::string part(trim(row.substr(comma + 1)));
    if (part != "train" && part != "val" && part != "test") fail(ErrorCode::MalformedCsv, where + "unknown split '" + part + "'");
    if (!assigned.emplace(id, part).second) fail(ErrorCode::MalformedCsv, where + "duplicate image_path " + id);
  }
  DatasetSplit out;
  out.train.provenance = out.val.provenance = out.test.provenance = index.provenance;
  for (const auto& r : index.records) {
    const auto it = assigned.find(r.image_id);
    if (it == assigned.end()) fail(ErrorCode::MalformedCsv, csv.string() + ": no split for " + r.image_id);
    (it->second == "train" ? out.train : it->second == "val" ? out.val : out.test).records.push_back(r);
    assigned.erase(it);
  }
  if (!assigned.empty()) fail(ErrorCode::MalformedCsv, csv.string() + ": unknown image " + assigned.begin()->first);
  if (out.train.records.empty()) fail(ErrorCode::TooFewSamples, csv.string() + " assigns nothing to train");
  return out;
}

}  // namespace rsfiqa
