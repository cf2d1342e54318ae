#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rsfiqa/numerics/autodiff.hpp"

namespace rsfiqa {

// H x W x 3 RGB image with channel values in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  // Throws ShapeMismatch on a non H x W x 3 tensor and InvalidTarget on values
  // outside [0, 1].
  explicit ImageTensor(Tensor pixels);

  static ImageTensor filled(std::size_t height, std::size_t width, double r, double g, double b);

  std::size_t height() const { return pixels_.dim(0); }
  std::size_t width() const { return pixels_.dim(1); }
  std::size_t pixel_count() const { return height() * width(); }
  const Tensor& pixels() const noexcept { return pixels_; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_.at(y, x, c); }
  Var as_var() const { return Var::constant(pixels_); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Tensor pixels_;
};

// Half-pixel bilinear resize.
ImageTensor resize(const ImageTensor& image, std::size_t height, std::size_t width);

// 8-bit PNG I/O. Reading accepts gray, gray+alpha, RGB, RGBA and 16-bit
// inputs; alpha is dropped. Errors are IoError.
ImageTensor read_png(const std::filesystem::path& path);
void write_png(const ImageTensor& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageTensor& image);

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_gray_png(const std::filesystem::path& path);
void write_gray_png(const GrayImage& image, const std::filesystem::path& path);

}  // namespace rsfiqa
