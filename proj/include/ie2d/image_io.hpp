#pragma once

#include <filesystem>

#include "ie2d/image.hpp"

namespace ie2d {

// 8-bit (or 16-bit, reduced) PNG of any color type, converted to gray and
// scaled to [0,1]. Throws IngestionError naming the file.
GrayImage read_png_gray(const std::filesystem::path& path);

// Values are clamped to [0,1] and written as round(255 * v).
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

// Half-pixel-centered resampling.
GrayImage resize_bilinear(const GrayImage& src, int width, int height);
GrayImage resize_nearest(const GrayImage& src, int width, int height);

// v >= threshold -> 1, else 0.
GrayImage binarize(const GrayImage& src, float threshold = 0.5f);

}  // namespace ie2d
