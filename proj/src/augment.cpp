#include "ie2d/augment.hpp"

#include <cmath>
#include <numbers>

#include "ie2d/errors.hpp"
#include "ie2d/image_io.hpp"

namespace ie2d {

std::pair<GrayImage, GrayImage> warp_pair(const GrayImage& image, const GrayImage& mask,
                                          const RigidTransform& t) {
  if (image.width != mask.width || image.height != mask.height)
    throw DimensionError("augment: image and mask sizes differ");
  if (t.is_identity()) return {image, binarize(mask)};

  const int w = image.width, h = image.height;
  GrayImage out_image(w, h), out_mask(w, h);
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;

  auto sample = [&](int x, int y) -> double {
    return (x >= 0 && x < w && y >= 0 && y < h) ? image.at(x, y) : 0.0;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // inverse map: undo the shift, then rotate by -theta about the center
      const double dx = x - cx - t.shift_x;
      const double dy = y - cy - t.shift_y;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;

      const double fx = std::floor(sx), fy = std::floor(sy);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double ax = sx - fx, ay = sy - fy;
      double v = sample(x0, y0) * (1 - ax) * (1 - ay);
      if (ax != 0.0) v += sample(x0 + 1, y0) * ax * (1 - ay);
      if (ay != 0.0) v += sample(x0, y0 + 1) * (1 - ax) * ay;
      if (ax != 0.0 && ay != 0.0) v += sample(x0 + 1, y0 + 1) * ax * ay;
      out_image.at(x, y) = static_cast<float>(v);

      const int nx = static_cast<int>(std::floor(sx + 0.5));
      const int ny = static_cast<int>(std::floor(sy + 0.5));
      const bool inside = nx >= 0 && nx < w && ny >= 0 && ny < h;
      out_mask.at(x, y) = inside && mask.at(nx, ny) >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return {std::move(out_image), std::move(out_mask)};
}

RigidTransform sample_transform(std::mt19937_64& rng, double max_rotation_deg,
                                double max_translate_frac, int width, int height) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  RigidTransform t;
  // Always draw three numbers so the stream position does not depend on the ranges.
  const double r = unit(rng), tx = unit(rng), ty = unit(rng);
  if (max_rotation_deg > 0) t.rotation_deg = r * max_rotation_deg;
  if (max_translate_frac > 0) {
    t.shift_x = tx * max_translate_frac * width;
    t.shift_y = ty * max_translate_frac * height;
  }
  return t;
}

std::pair<GrayImage, GrayImage> augment(const GrayImage& image, const GrayImage& mask,
                                        std::mt19937_64& rng, double max_rotation_deg,
                                        double max_translate_frac) {
  return warp_pair(image, mask,
                   sample_transform(rng, max_rotation_deg, max_translate_frac, image.width,
                                    image.height));
}

}  // namespace ie2d
