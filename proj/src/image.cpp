#include "rsfiqa/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "rsfiqa/error.hpp"
#include "rsfiqa/numerics/ops.hpp"

namespace rsfiqa {

ImageTensor::ImageTensor(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rank() != 3 || pixels_.dim(2) != 3) {
    fail(ErrorCode::ShapeMismatch, "image must be H x W x 3, got " + shape_string(pixels_.shape()));
  }
  for (double v : pixels_.data()) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::InvalidTarget, "image values must lie in [0, 1]");
  }
}

ImageTensor ImageTensor::filled(std::size_t height, std::size_t width, double r, double g, double b) {
  Tensor t({height, width, 3});
  for (std::size_t i = 0; i < height * width; ++i) {
    t[i * 3] = r;
    t[i * 3 + 1] = g;
    t[i * 3 + 2] = b;
  }
  return ImageTensor(std::move(t));
}

ImageTensor resize(const ImageTensor& image, std::size_t height, std::size_t width) {
  if (image.height() == height && image.width() == width) return image;
  NoGradGuard no_grad;
  Tensor out = ops::bilinear_interp(image.as_var(), height, width).value();
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return ImageTensor(std::move(out));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  *where = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct Decoded {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> bytes;
};

Decoded decode(const std::filesystem::path& path, bool want_gray) {
  FilePtr f = open_file(path, "rb");
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::IoError, "libpng initialisation failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::IoError, "cannot decode " + path.string() + ": " + message);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (want_gray) {
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * out.height);
  rows.resize(out.height);
  for (std::size_t y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_fn(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  buf->insert(buf->end(), data, data + length);
}

void flush_fn(png_structp) {}

std::vector<std::uint8_t> encode(std::size_t height, std::size_t width, int color_type,
                                 std::size_t channels, const std::vector<std::uint8_t>& bytes) {
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoError, "libpng initialisation failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoError, "png encoding failed: " + message);
  }
  png_set_write_fn(png, &out, write_fn, flush_fn);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + y * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  FilePtr f = open_file(path, "wb");
  if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    fail(ErrorCode::IoError, "short write to " + path.string());
  }
}

}  // namespace

ImageTensor read_png(const std::filesystem::path& path) {
  Decoded d = decode(path, false);
  Tensor t({d.height, d.width, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(d.bytes[i]) / 255.0;
  return ImageTensor(std::move(t));
}

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
  std::vector<std::uint8_t> bytes(image.pixels().size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(image.pixels()[i] * 255.0));
  return encode(image.height(), image.width(), PNG_COLOR_TYPE_RGB, 3, bytes);
}

void write_png(const ImageTensor& image, const std::filesystem::path& path) {
  write_bytes(encode_png(image), path);
}

GrayImage read_gray_png(const std::filesystem::path& path) {
  Decoded d = decode(path, true);
  return {d.height, d.width, std::move(d.bytes)};
}

void write_gray_png(const GrayImage& image, const std::filesystem::path& path) {
  if (image.pixels.size() != image.height * image.width) {
    fail(ErrorCode::ShapeMismatch, "gray image buffer does not match its extents");
  }
  write_bytes(encode(image.height, image.width, PNG_COLOR_TYPE_GRAY, 1, image.pixels), path);
}

}  // namespace rsfiqa
