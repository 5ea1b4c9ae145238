#include "ie2d/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ie2d/errors.hpp"

namespace ie2d {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::array<double, 3> kMaxAmp = {0.08, 0.05, 0.03};
constexpr double kOutsideBody = 0.05;
constexpr double kBodyTissue = 0.35;

BlobShape sample_blob(std::mt19937_64& rng, double center_x) {
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  BlobShape s;
  s.cx = center_x + uniform(-0.04, 0.04);
  s.cy = 0.52 + uniform(-0.05, 0.05);
  s.a = uniform(0.09, 0.14);
  s.b = uniform(0.12, 0.19);
  s.angle = uniform(-0.5, 0.5);
  for (int k = 0; k < 3; ++k) {
    s.amp[k] = uniform(0.0, kMaxAmp[k]);
    s.phase[k] = uniform(0.0, kTwoPi);
  }
  return s;
}

}  // namespace

bool BlobShape::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (c * dx + s * dy) / a;
  const double v = (-s * dx + c * dy) / b;
  const double r = std::hypot(u, v);
  const double theta = std::atan2(v, u);
  double boundary = 1.0;
  for (int k = 0; k < 3; ++k) boundary += amp[k] * std::cos((k + 2) * theta + phase[k]);
  return r <= boundary;
}

Anatomy sample_anatomy(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  Anatomy anatomy;
  anatomy.blobs[0] = sample_blob(rng, 0.32);
  anatomy.blobs[1] = sample_blob(rng, 0.68);
  return anatomy;
}

std::array<BlobShape, 2> slice_shapes(const Anatomy& anatomy, int slice, int n_slices) {
  const double t = n_slices > 1 ? static_cast<double>(slice) / (n_slices - 1) - 0.5 : 0.0;
  const double scale = 1.0 - 0.3 * (2 * t) * (2 * t);
  std::array<BlobShape, 2> shapes = anatomy.blobs;
  for (int i = 0; i < 2; ++i) {
    const double side = i == 0 ? -1.0 : 1.0;
    shapes[i].cx += 0.03 * t * side;
    shapes[i].cy += 0.04 * t;
    shapes[i].a *= scale;
    shapes[i].b *= scale;
    shapes[i].angle += 0.2 * t * side;
  }
  return shapes;
}

GrayImage rasterize_mask(const std::array<BlobShape, 2>& shapes, int size) {
  GrayImage mask(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = (x + 0.5) / size, py = (y + 0.5) / size;
      mask.at(x, y) = shapes[0].contains(px, py) || shapes[1].contains(px, py) ? 1.0f : 0.0f;
    }
  return mask;
}

Volume generate_synthetic_volume(const Anatomy& anatomy, std::uint64_t image_seed,
                                 const SyntheticOptions& options, std::string id) {
  if (options.n_slices < 1) throw ConfigError("synthetic volume needs at least one slice");
  if (options.size < 2 || options.size % 2 != 0)
    throw ConfigError("synthetic volume size must be a positive even number");

  std::mt19937_64 rng(image_seed * 0xD1B54A32D192ED03ULL + 7);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  // Smooth bias field shared by all slices of the volume.
  const double gx = coef(rng), gy = coef(rng), gs = coef(rng);
  const double fx = 0.5 + 0.5 * (coef(rng) + 1), fy = 0.5 + 0.5 * (coef(rng) + 1);
  const double ph = kTwoPi * 0.5 * (coef(rng) + 1);

  Volume volume;
  volume.id = std::move(id);
  const int size = options.size;
  for (int slice = 0; slice < options.n_slices; ++slice) {
    const auto shapes = slice_shapes(anatomy, slice, options.n_slices);
    GrayImage mask = rasterize_mask(shapes, size);
    GrayImage image(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double px = (x + 0.5) / size, py = (y + 0.5) / size;
        const double bx = (px - 0.5) / 0.47, by = (py - 0.52) / 0.42;
        double v = bx * bx + by * by <= 1.0 ? kBodyTissue : kOutsideBody;
        if (mask.at(x, y) > 0.5f) v = kBodyTissue + options.contrast;
        v += options.bias * (gx * (px - 0.5) + gy * (py - 0.5) +
                             0.5 * gs * std::sin(kTwoPi * (fx * px + fy * py) + ph));
        v += options.noise * noise(rng);
        image.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    volume.images.push_back(std::move(image));
    volume.masks.push_back(std::move(mask));
  }
  return volume;
}

Volume generate_synthetic_volume(std::uint64_t seed, int n_slices, int size, double contrast) {
  SyntheticOptions options;
  options.n_slices = n_slices;
  options.size = size;
  options.contrast = contrast;
  return generate_synthetic_volume(sample_anatomy(seed), seed, options);
}

SyntheticCorpus generate_corpus(int n_volumes, const SyntheticOptions& options,
                                std::uint64_t seed) {
  if (n_volumes < 1) throw ConfigError("corpus needs at least one volume");
  const int pairs = n_volumes >= 6 ? 2 : (n_volumes >= 4 ? 1 : 0);
  SyntheticCorpus corpus;
  int patient = 0;
  std::uint64_t image_seed = seed * 1000;
  auto add = [&](const Anatomy& anatomy, const std::string& id) {
    corpus.volumes.push_back(generate_synthetic_volume(anatomy, ++image_seed, options, id));
  };
  for (int p = 0; p < pairs; ++p) {
    ++patient;
    const Anatomy anatomy = sample_anatomy(seed * 1000 + patient);
    const std::string id = "P" + std::to_string(patient);
    add(anatomy, id);
    add(anatomy, id + "post");
    corpus.same_patient.emplace_back(id, id + "post");
  }
  while (static_cast<int>(corpus.volumes.size()) < n_volumes) {
    ++patient;
    add(sample_anatomy(seed * 1000 + patient), "P" + std::to_string(patient));
  }
  corpus.val_volume = corpus.volumes.back().id;
  return corpus;
}

}  // namespace ie2d
