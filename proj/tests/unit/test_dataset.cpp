#include <fstream>
#include <iterator>
#include <set>

#include "doctest.h"
#include "rsfiqa/dataset.hpp"
#include "support.hpp"

using namespace rsfiqa;
using testing::code_of;
using testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_image(const std::filesystem::path& p) { write_png(ImageTensor(Tensor({8, 8, 3}, 0.5)), p); }

std::set<std::string> ids(const DatasetIndex& index) {
  std::set<std::string> out;
  for (const auto& r : index.records) out.insert(r.image_id);
  return out;
}

DatasetIndex fake_index(std::size_t n) {
  DatasetIndex index;
  for (std::size_t i = 0; i < n; ++i) index.records.push_back({"img" + std::to_string(i), {}, double(i)});
  return index;
}

}  // namespace

TEST_CASE("load_dataset") {
  TempDir dir("dataset");
  for (const char* name : {"a.png", "b.png", "c.png"}) write_image(dir / name);

  SUBCASE("three valid rows") {
    std::ofstream(dir / "d.csv") << "image_path,mos\na.png,3.5\nb.png,1\n\nc.png,4.25\n";
    const DatasetIndex index = load_dataset(dir / "d.csv");
    REQUIRE(index.size() == 3);
    CHECK(index.records[0].image_id == "a.png");
    CHECK(index.records[0].path == dir / "a.png");
    CHECK(index.records[2].mos == 4.25);
  }
  SUBCASE("images resolved against an explicit directory") {
    TempDir other("csv-only");
    std::ofstream(other / "d.csv") << "image_path,mos\nb.png,2\n";
    CHECK(load_dataset(other / "d.csv", dir.path()).records[0].path == dir / "b.png");
  }
  SUBCASE("duplicate image_path reports its line") {
    std::ofstream(dir / "d.csv") << "image_path,mos\na.png,3\na.png,4\n";
    try {
      load_dataset(dir / "d.csv");
      FAIL("expected MalformedCsv");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedCsv);
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
  }
  SUBCASE("absent image names the path") {
    std::ofstream(dir / "d.csv") << "image_path,mos\nmissing.png,3\n";
    try {
      load_dataset(dir / "d.csv");
      FAIL("expected MissingImage");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingImage);
      CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
    }
  }
  SUBCASE("malformed rows and headers") {
    std::ofstream(dir / "h.csv") << "path,mos\na.png,3\n";
    CHECK(code_of([&] { load_dataset(dir / "h.csv"); }) == ErrorCode::MalformedCsv);
    std::ofstream(dir / "r.csv") << "image_path,mos\na.png,three\n";
    CHECK(code_of([&] { load_dataset(dir / "r.csv"); }) == ErrorCode::MalformedCsv);
    CHECK(code_of([&] { load_dataset(dir / "absent.csv"); }) == ErrorCode::IoError);
  }
  SUBCASE("write then load") {
    DatasetIndex index;
    index.records = {{"a.png", dir / "a.png", 2.5}, {"c.png", dir / "c.png", 1.0 / 3.0}};
    write_dataset_csv(index, dir / "w.csv");
    const DatasetIndex back = load_dataset(dir / "w.csv");
    REQUIRE(back.size() == 2);
    CHECK(back.records[1].mos == 1.0 / 3.0);
  }
}

TEST_CASE("synthetic MOS construction") {
  CHECK(synthetic_mos({{{DistortionKind::Blur}, 0.0}, {{DistortionKind::Noise}, 0.0}}) == 5.0);
  CHECK(synthetic_mos({{{DistortionKind::Block}, 1.0}}) == 1.0);
  // mean s = 0.375 -> 1 + 4 * 0.625
  CHECK(synthetic_mos({{{}, 0.25}, {{}, 0.5}}) == doctest::Approx(3.5).epsilon(1e-15));

  SUBCASE("blur-only and noise-only at equal strength score the same") {
    const SyntheticSample probe = generate_synthetic_sample(32, 4);
    const std::size_t n = probe.regions.size();
    std::vector<RegionDistortion> blur(n, {{DistortionKind::Blur}, 0.6});
    std::vector<RegionDistortion> noise(n, {{DistortionKind::Noise}, 0.6});
    const SyntheticSample a = generate_synthetic_sample(32, 4, blur), b = generate_synthetic_sample(32, 4, noise);
    CHECK(a.mos == b.mos);
    CHECK(a.mos == doctest::Approx(1.0 + 4.0 * 0.4));
    CHECK(a.image.pixels() != b.image.pixels());
  }
  SUBCASE("zero strength everywhere leaves the clean image at MOS 5") {
    const SyntheticSample probe = generate_synthetic_sample(32, 9);
    const SyntheticSample s = generate_synthetic_sample(32, 9, std::vector<RegionDistortion>(probe.regions.size(), {{}, 0.0}));
    CHECK(s.mos == 5.0);
    CHECK(s.image.pixels() == s.clean.pixels());
  }
  SUBCASE("distortion count must match the layout") {
    CHECK(code_of([] { generate_synthetic_sample(32, 9, std::vector<RegionDistortion>(9)); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("distortions") {
  std::mt19937_64 rng(3);
  const ImageTensor image(testing::random_tensor({16, 16, 3}, rng, 0.0, 1.0));
  for (DistortionKind k : kDistortionKinds) {
    CAPTURE(distortion_name(k));
    CHECK(apply_distortion(image, k, 0.0, rng).pixels() == image.pixels());
  }
  SUBCASE("full desaturation leaves luma in every channel") {
    const ImageTensor g = apply_distortion(image, DistortionKind::Desaturate, 1.0, rng);
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const double luma = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
        for (std::size_t c = 0; c < 3; ++c) CHECK(g.at(y, x, c) == doctest::Approx(luma).epsilon(1e-12));
      }
  }
  SUBCASE("full blocking gives the 8x8 block means") {
    const ImageTensor b = apply_distortion(image, DistortionKind::Block, 1.0, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t y = 8; y < 16; ++y)
        for (std::size_t x = 0; x < 8; ++x) mean += image.at(y, x, c) / 64.0;
      CHECK(b.at(9, 3, c) == doctest::Approx(mean).epsilon(1e-12));
      CHECK(b.at(15, 7, c) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("blur keeps a constant image constant") {
    const ImageTensor flat(Tensor({16, 16, 3}, 0.3));
    for (double v : apply_distortion(flat, DistortionKind::Blur, 1.0, rng).pixels().data()) CHECK(v == doctest::Approx(0.3));
  }
  SUBCASE("noise spread follows 0.2 s") {
    const ImageTensor flat(Tensor({64, 64, 3}, 0.5));
    const Tensor noisy = apply_distortion(flat, DistortionKind::Noise, 0.5, rng).pixels();
    double var = 0.0;
    for (double v : noisy.data()) var += (v - 0.5) * (v - 0.5) / static_cast<double>(noisy.size());
    CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.05));
  }
  SUBCASE("strength outside [0, 1]") {
    CHECK(code_of([&] { apply_distortion(image, DistortionKind::Blur, 1.5, rng); }) == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("synthetic layouts") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticSample s = generate_synthetic_sample(32, seed);
    CHECK(s.regions.size() >= 2);
    CHECK(s.regions.size() <= 4);
    std::vector<std::size_t> area(s.regions.size(), 0);
    for (auto v : s.labels) ++area.at(v);
    for (std::size_t a : area) CHECK(a * 10 >= s.labels.size());
    CHECK(s.mos >= 1.0);
    CHECK(s.mos <= 5.0);
  }
}

TEST_CASE("make_synthetic_dataset") {
  TempDir a("synth-a"), b("synth-b");
  const DatasetIndex first = make_synthetic_dataset(4, 11, a.path(), 32);
  const DatasetIndex second = make_synthetic_dataset(4, 11, b.path(), 32);
  REQUIRE(first.size() == 4);
  CHECK(first.provenance == Provenance::Synthetic);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(first.records[i].mos == second.records[i].mos);
    CHECK(slurp(first.records[i].path) == slurp(second.records[i].path));
  }
  CHECK(slurp(a / "dataset.csv") == slurp(b / "dataset.csv"));
  const DatasetIndex loaded = load_dataset(a / "dataset.csv");
  REQUIRE(loaded.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(loaded.records[i].mos == first.records[i].mos);
  CHECK(read_png(first.records[0].path).height() == 32);
  CHECK(code_of([&] { make_synthetic_dataset(1, 0, a.path()); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("split") {
  const DatasetIndex index = fake_index(10);
  const DatasetSplit s = split_dataset(index, {0.7, 0.1, 0.2}, 5);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);

  std::set<std::string> all = ids(s.train);
  for (const auto& part : {s.val, s.test})
    for (const auto& id : ids(part)) CHECK(all.insert(id).second);
  CHECK(all == ids(index));

  const DatasetSplit again = split_dataset(index, {0.7, 0.1, 0.2}, 5);
  CHECK(ids(again.train) == ids(s.train));
  CHECK(ids(again.test) == ids(s.test));
  const DatasetSplit other = split_dataset(index, {0.7, 0.1, 0.2}, 6);
  CHECK(ids(other.train) != ids(s.train));

  const DatasetSplit no_val = split_dataset(fake_index(80), {0.8, 0.0, 0.2}, 0);
  CHECK(no_val.train.size() == 64);
  CHECK(no_val.val.size() == 0);
  CHECK(no_val.test.size() == 16);

  CHECK(code_of([] { split_dataset(fake_index(3), {0.7, 0.1, 0.2}, 0); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("split files") {
  TempDir dir("splitfile");
  const DatasetIndex index = fake_index(4);
  std::ofstream(dir / "s.csv") << "image_path,split\nimg0,train\nimg1,test\nimg2,train\nimg3,val\n";
  const DatasetSplit s = split_from_file(index, dir / "s.csv");
  CHECK(ids(s.train) == std::set<std::string>{"img0", "img2"});
  CHECK(ids(s.val) == std::set<std::string>{"img3"});
  CHECK(ids(s.test) == std::set<std::string>{"img1"});

  std::ofstream(dir / "missing.csv") << "image_path,split\nimg0,train\nimg1,test\n";
  CHECK(code_of([&] { split_from_file(index, dir / "missing.csv"); }) == ErrorCode::MalformedCsv);
  std::ofstream(dir / "bad.csv") << "image_path,split\nimg0,holdout\n";
  CHECK(code_of([&] { split_from_file(index, dir / "bad.csv"); }) == ErrorCode::MalformedCsv);
  std::ofstream(dir / "extra.csv") << "image_path,split\nimg0,train\nimg1,test\nimg2,train\nimg3,val\nimg9,val\n";
  CHECK(code_of([&] { split_from_file(index, dir / "extra.csv"); }) == ErrorCode::MalformedCsv);
}
