#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ie2d/dataset.hpp"

namespace ie2d {

// Closed curve r(theta) = 1 + sum_k amp[k] cos((k+2) theta + phase[k]) in the
// frame of an ellipse with center (cx, cy), semi-axes (a, b) and orientation
// `angle`. Coordinates are normalized to [0,1] across the image.
struct BlobShape {
  double cx = 0.5, cy = 0.5;
  double a = 0.1, b = 0.1;
  double angle = 0.0;
  std::array<double, 3> amp{};
  std::array<double, 3> phase{};

  bool contains(double x, double y) const;
};

// Per-patient shape parameters: two blobs standing in for the paired bones.
struct Anatomy {
  std::array<BlobShape, 2> blobs;
};

struct SyntheticOptions {
  int n_slices = 12;
  int size = 128;
  double contrast = 0.4;  // interior minus background intensity
  double noise = 0.04;    // Gaussian noise sigma
  double bias = 0.08;     // smooth bias field amplitude
};

Anatomy sample_anatomy(std::uint64_t seed);

// Shapes of slice `slice` out of `n_slices`: the base blobs with a smooth drift
// in position and scale along the volume.
std::array<BlobShape, 2> slice_shapes(const Anatomy& anatomy, int slice, int n_slices);

// Rasterizes the mask: pixel (x, y) is foreground iff its center
// ((x + 0.5) / size, (y + 0.5) / size) lies in either blob.
GrayImage rasterize_mask(const std::array<BlobShape, 2>& shapes, int size);

// Deterministic in (anatomy, image_seed, options).
Volume generate_synthetic_volume(const Anatomy& anatomy, std::uint64_t image_seed,
                                 const SyntheticOptions& options, std::string id = "synthetic");

// Anatomy and noise both derived from `seed`.
Volume generate_synthetic_volume(std::uint64_t seed, int n_slices, int size,
                                 double contrast = SyntheticOptions{}.contrast);

// A corpus of `n_volumes` pseudo-volumes. The first two patients get a second
// ("post") volume sharing their anatomy; the last volume is the suggested
// validation volume.
struct SyntheticCorpus {
  std::vector<Volume> volumes;
  std::vector<std::pair<std::string, std::string>> same_patient;
  std::string val_volume;
};

SyntheticCorpus generate_corpus(int n_volumes, const SyntheticOptions& options, std::uint64_t seed);

}  // namespace ie2d
