#include "ie2d/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "ie2d/errors.hpp"

namespace ie2d {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(const std::filesystem::path& path, const std::string& what) {
  throw IngestionError(path.string() + ": " + what);
}

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               const std::uint8_t* data, int channels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IngestionError(path.string() + ": cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IngestionError(path.string() + ": libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IngestionError(path.string() + ": PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or other ancillary chunks: identical pixels give identical files.
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) png_fail(path, "cannot open file");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    png_fail(path, "not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    png_fail(path, "libpng initialization failed");
  }
  GrayImage out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, "corrupt PNG data");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (width <= 0 || height <= 0) png_fail(path, "empty image");
  out = GrayImage(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(x, y) = rows[y][x] / 255.0f;
  return out;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, bytes.data(), 1);
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, image.rgb.data(), 3);
}

GrayImage resize_bilinear(const GrayImage& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  GrayImage out(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const double top = src.at(x0, y0) * (1 - wx) + src.at(x1, y0) * wx;
      const double bottom = src.at(x0, y1) * (1 - wx) + src.at(x1, y1) * wx;
      out.at(x, y) = static_cast<float>(top * (1 - wy) + bottom * wy);
    }
  }
  return out;
}

GrayImage resize_nearest(const GrayImage& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  GrayImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const int syi = std::min(static_cast<int>((y + 0.5) * src.height / height), src.height - 1);
    for (int x = 0; x < width; ++x) {
      const int sxi = std::min(static_cast<int>((x + 0.5) * src.width / width), src.width - 1);
      out.at(x, y) = src.at(sxi, syi);
    }
  }
  return out;
}

GrayImage binarize(const GrayImage& src, float threshold) {
  GrayImage out = src;
  for (float& v : out.pixels) v = v >= threshold ? 1.0f : 0.0f;
  return out;
}

}  // namespace ie2d
