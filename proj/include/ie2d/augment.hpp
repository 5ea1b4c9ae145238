#pragma once

#include <random>
#include <utility>

#include "ie2d/image.hpp"

namespace ie2d {

// Rigid transform about the image center: rotate by `rotation_deg`, then shift
// by (shift_x, shift_y) pixels.
struct RigidTransform {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;

  bool is_identity() const { return rotation_deg == 0.0 && shift_x == 0.0 && shift_y == 0.0; }
};

// Applies the same transform to an image (bilinear) and its mask (nearest,
// then binarized at 0.5). Pixels mapped from outside the frame become 0.
std::pair<GrayImage, GrayImage> warp_pair(const GrayImage& image, const GrayImage& mask,
                                          const RigidTransform& transform);

// Draws rotation uniformly in [-max_rotation_deg, max_rotation_deg] and each
// shift uniformly in [-max_translate_frac, max_translate_frac] * side length.
RigidTransform sample_transform(std::mt19937_64& rng, double max_rotation_deg,
                                double max_translate_frac, int width, int height);

std::pair<GrayImage, GrayImage> augment(const GrayImage& image, const GrayImage& mask,
                                        std::mt19937_64& rng, double max_rotation_deg,
                                        double max_translate_frac);

}  // namespace ie2d
