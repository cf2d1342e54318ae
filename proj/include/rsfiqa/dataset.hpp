#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rsfiqa/image.hpp"

namespace rsfiqa {

struct DatasetRecord {
  std::string image_id;  // the image_path column as written
  std::filesystem::path path;
  double mos = 0.0;
};

enum class Provenance { Synthetic, External };

struct DatasetIndex {
  std::vector<DatasetRecord> records;
  Provenance provenance = Provenance::External;

  std::size_t size() const { return records.size(); }
};

// CSV with header `image_path,mos`. Paths resolve against images_dir, or the
// CSV's directory when images_dir is empty. MalformedCsv (line number),
// MissingImage (path), IoError.
DatasetIndex load_dataset(const std::filesystem::path& csv, const std::filesystem::path& images_dir = {});
void write_dataset_csv(const DatasetIndex& index, const std::filesystem::path& csv);

enum class DistortionKind : std::uint8_t { Blur, Noise, Desaturate, Block };
inline constexpr std::array<DistortionKind, 4> kDistortionKinds{DistortionKind::Blur, DistortionKind::Noise,
                                                                DistortionKind::Desaturate, DistortionKind::Block};
std::string_view distortion_name(DistortionKind kind);

// Kinds are applied in order, all at the same strength. The default is the
// compound used by the generator.
struct RegionDistortion {
  std::vector<DistortionKind> kinds{DistortionKind::Blur, DistortionKind::Block, DistortionKind::Desaturate,
                                    DistortionKind::Noise};
  double strength = 0.0;  // s in [0, 1]
};

// 1 + 4 (1 - mean s): undistorted images score 5.
double synthetic_mos(const std::vector<RegionDistortion>& regions);

// Applies one distortion to the whole image; s = 0 is the identity.
//   blur        Gaussian, sigma = 2.5 s
//   noise       additive Gaussian, sigma = 0.2 s, clamped to [0, 1]
//   desaturate  blend towards luma by s
//   block       blend towards 8x8 block means by s
ImageTensor apply_distortion(const ImageTensor& image, DistortionKind kind, double strength, std::mt19937_64& rng);

struct SyntheticSample {
  ImageTensor clean;
  ImageTensor image;
  std::vector<std::uint8_t> labels;  // region per pixel, 0 is the backdrop
  std::vector<RegionDistortion> regions;
  double mos = 0.0;
};

// 2-4 textured regions (a backdrop plus rectangles and ellipses), each
// degraded by the compound distortion at its own strength. Fully determined
// by (size, seed).
SyntheticSample generate_synthetic_sample(std::size_t size, std::uint64_t seed);
// Same layout, explicit per-region distortions (size must match the layout's
// region count).
SyntheticSample generate_synthetic_sample(std::size_t size, std::uint64_t seed,
                                          const std::vector<RegionDistortion>& regions);

// Writes img_0000.png ... and dataset.csv into out_dir. count >= 2.
DatasetIndex make_synthetic_dataset(std::size_t count, std::uint64_t seed, const std::filesystem::path& out_dir,
                                    std::size_t size = 64);

struct DatasetSplit {
  DatasetIndex train;
  DatasetIndex val;
  DatasetIndex test;
};

// Seeded shuffle, then floor(r * n) records for train and val; test takes the
// rest. TooFewSamples when a split with a positive ratio would be empty.
DatasetSplit split_dataset(const DatasetIndex& index, const std::array<double, 3>& ratios, std::uint64_t seed);
// Split given by a CSV with header `image_path,split` and values train, val
// or test. Every record must be assigned exactly once (MalformedCsv names
// the offending line or id).
DatasetSplit split_from_file(const DatasetIndex& index, const std::filesystem::path& csv);

}  // namespace rsfiqa
