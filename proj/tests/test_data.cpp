#include <doctest.h>

#include <algorithm>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include "ie2d/dataset.hpp"
#include "ie2d/errors.hpp"
#include "ie2d/image_io.hpp"
#include "ie2d/synthetic.hpp"
#include "test_support.hpp"

using namespace ie2d;
using namespace ie2d::testing;

namespace {

// The blob boundary, evaluated with complex arithmetic: rotate the offset by
// -angle, scale the axes to the unit circle and compare the radius to
// 1 + sum amp_k cos((k+2) theta + phase_k).
bool blob_oracle(const BlobShape& s, double x, double y) {
  const std::complex<double> local = std::complex<double>(x - s.cx, y - s.cy) * std::polar(1.0, -s.angle);
  const std::complex<double> unit(local.real() / s.a, local.imag() / s.b);
  double boundary = 1.0;
  for (int k = 0; k < 3; ++k) boundary += s.amp[k] * std::cos((k + 2) * std::arg(unit) + s.phase[k]);
  return std::abs(unit) <= boundary;
}

std::size_t foreground(const GrayImage& m) {
  return static_cast<std::size_t>(std::count(m.pixels.begin(), m.pixels.end(), 1.0f));
}

// Two volumes of three slices written as 8-bit PNGs plus a manifest.
std::filesystem::path write_small_corpus(const std::string& name, int size) {
  const auto dir = temp_dir(name);
  std::vector<Volume> volumes;
  for (int i = 0; i < 2; ++i) {
    auto v = generate_synthetic_volume(10 + i, 3, size);
    v.id = i ? "B" : "A";
    volumes.push_back(std::move(v));
  }
  write_corpus(dir, volumes);
  return dir;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("synthetic volumes are deterministic in the seed") {
  const auto a = generate_synthetic_volume(5, 6, 32);
  const auto b = generate_synthetic_volume(5, 6, 32);
  const auto c = generate_synthetic_volume(6, 6, 32);
  REQUIRE(a.slices() == 6);
  for (std::size_t s = 0; s < a.slices(); ++s) {
    CHECK(a.images[s] == b.images[s]);
    CHECK(a.masks[s] == b.masks[s]);
  }
  CHECK_FALSE(a.images[0] == c.images[0]);
  for (const auto& img : a.images)
    for (float v : img.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  for (const auto& m : a.masks) {
    CHECK(m.width == 32);
    for (float v : m.pixels) CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_CASE("mask membership matches the closed-curve equation") {
  std::mt19937_64 rng(9);
  const int size = 128;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Anatomy anatomy = sample_anatomy(seed);
    for (int slice : {0, 5, 11}) {
      const auto shapes = slice_shapes(anatomy, slice, 12);
      const GrayImage mask = rasterize_mask(shapes, size);
      std::uniform_int_distribution<int> px(0, size - 1);
      int agree = 0;
      for (int t = 0; t < 1000; ++t) {
        const int x = px(rng), y = px(rng);
        const double cx = (x + 0.5) / size, cy = (y + 0.5) / size;
        const bool inside = blob_oracle(shapes[0], cx, cy) || blob_oracle(shapes[1], cx, cy);
        agree += inside == (mask.at(x, y) == 1.0f);
      }
      CHECK(agree == 1000);
      CHECK(foreground(mask) > 0);
    }
  }
}

TEST_CASE("zero contrast leaves no intensity step at the boundary") {
  SyntheticOptions o;
  o.n_slices = 2;
  o.size = 64;
  o.contrast = 0.0;
  o.noise = 0.0;
  o.bias = 0.0;
  const auto v = generate_synthetic_volume(sample_anatomy(4), 1, o);
  for (std::size_t s = 0; s < v.slices(); ++s) {
    double in = 0, out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < v.images[s].pixels.size(); ++i) {
      if (v.masks[s].pixels[i] == 1.0f) {
        in += v.images[s].pixels[i];
        ++n_in;
      } else if (v.images[s].pixels[i] > 0.2f) {  // inside the body, outside the shapes
        out += v.images[s].pixels[i];
        ++n_out;
      }
    }
    REQUIRE(n_in > 0);
    CHECK(in / n_in == doctest::Approx(out / n_out).epsilon(1e-6));
  }
  o.contrast = 0.4;
  const auto lit = generate_synthetic_volume(sample_anatomy(4), 1, o);
  CHECK_FALSE(lit.images[0] == v.images[0]);
}

TEST_CASE("corpus ids, patient pairs and validation volume") {
  SyntheticOptions o;
  o.n_slices = 2;
  o.size = 16;
  const auto corpus = generate_corpus(7, o, 1);
  std::vector<std::string> ids;
  for (const auto& v : corpus.volumes) ids.push_back(v.id);
  CHECK(ids == std::vector<std::string>{"P1", "P1post", "P2", "P2post", "P3", "P4", "P5"});
  CHECK(corpus.val_volume == "P5");
  CHECK(corpus.same_patient.size() == 2);
  // a repeat scan shares anatomy, so masks match while noise differs
  CHECK(corpus.volumes[0].masks[0] == corpus.volumes[1].masks[0]);
  CHECK_FALSE(corpus.volumes[0].images[0] == corpus.volumes[1].images[0]);
}

TEST_CASE("load_pairs reads two volumes of three slices") {
  const auto dir = write_small_corpus("load_pairs", 32);
  const auto manifest = read_manifest(dir / "manifest.csv");
  CHECK(manifest.size() == 6);
  const auto volumes = load_pairs(dir / "images", dir / "masks", manifest, 32);
  REQUIRE(volumes.size() == 2);
  CHECK(volumes[0].id == "A");
  CHECK(volumes[1].id == "B");
  const auto original = generate_synthetic_volume(10, 3, 32);
  for (int s = 0; s < 3; ++s) {
    CHECK(volumes[0].masks[s] == original.masks[s]);
    for (std::size_t i = 0; i < original.images[s].pixels.size(); ++i)
      CHECK(volumes[0].images[s].pixels[i] == doctest::Approx(original.images[s].pixels[i]).epsilon(0.5 / 255));
  }

  const std::vector<SampleRef> refs{{0, 0}, {1, 2}, {0, 1}};
  const auto batch = make_batch(volumes, refs);
  CHECK(batch.images.shape() == (Shape{3, 1, 32, 32}));
  CHECK(batch.volume_ids == std::vector<std::string>{"A", "B", "A"});
  CHECK(batch.slice_indices == std::vector<int>{0, 2, 1});
  CHECK_NOTHROW(batch.validate());
}

TEST_CASE("manifest order does not matter and round-trips") {
  std::vector<ManifestEntry> m{{"X", 2, "x2.png", "x2m.png"}, {"X", 0, "x0.png", "x0m.png"}};
  const auto dir = temp_dir("manifest");
  write_manifest(dir / "m.csv", m);
  CHECK(read_manifest(dir / "m.csv") == m);
}

TEST_CASE("masks stored as 0/255 or raw 0/1 both load as 0/1") {
  const auto dir = temp_dir("mask_levels");
  std::filesystem::create_directories(dir / "img");
  std::filesystem::create_directories(dir / "msk");
  GrayImage img(8, 8, 0.5f), m255(8, 8), m1(8, 8);
  for (int x = 0; x < 4; ++x) {
    m255.at(x, 2) = 1.0f;
    m1.at(x, 2) = 1.0f / 255.0f;
  }
  write_png_gray(dir / "img" / "a.png", img);
  write_png_gray(dir / "msk" / "a255.png", m255);
  write_png_gray(dir / "msk" / "a1.png", m1);
  const auto vols = load_pairs(dir / "img", dir / "msk",
                               {{"V", 0, "a.png", "a255.png"}, {"V", 1, "a.png", "a1.png"}}, 8);
  REQUIRE(vols.size() == 1);
  CHECK(vols[0].masks[0] == m255);
  CHECK(vols[0].masks[1] == m255);
}

TEST_CASE("resizing 256 to 128 quarters the mask area") {
  const auto dir = temp_dir("resize");
  std::filesystem::create_directories(dir / "img");
  std::filesystem::create_directories(dir / "msk");
  const auto shapes = slice_shapes(sample_anatomy(3), 4, 12);
  const GrayImage big = rasterize_mask(shapes, 256);
  write_png_gray(dir / "img" / "s.png", GrayImage(256, 256, 0.3f));
  write_png_gray(dir / "msk" / "s.png", big);
  const auto vols = load_pairs(dir / "img", dir / "msk", {{"V", 0, "s.png", "s.png"}}, 128);
  const GrayImage& small = vols[0].masks[0];
  CHECK(small.width == 128);
  CHECK(small.height == 128);
  for (float v : small.pixels) CHECK((v == 0.0f || v == 1.0f));
  const double ratio = static_cast<double>(foreground(small)) / foreground(big);
  CHECK(ratio == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("ingestion errors name the problem") {
  const auto dir = write_small_corpus("errors", 16);
  auto manifest = read_manifest(dir / "manifest.csv");
  manifest[1].image_file = "missing.png";
  CHECK_THROWS_WITH_AS(load_pairs(dir / "images", dir / "masks", manifest, 16),
                       doctest::Contains("missing.png"), IngestionError);
  CHECK_THROWS_AS(load_pairs(dir / "images", dir / "masks", {}, 16), IngestionError);

  // a soft-edged mask is not a binary label map
  GrayImage soft(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) soft.at(x, y) = x / 15.0f;
  write_png_gray(dir / "masks" / "soft.png", soft);
  manifest = read_manifest(dir / "manifest.csv");
  manifest[0].mask_file = "soft.png";
  CHECK_THROWS_WITH_AS(load_pairs(dir / "images", dir / "masks", manifest, 16),
                       doctest::Contains("ambiguous"), IngestionError);

  std::ofstream(dir / "broken.png") << "not a png";
  CHECK_THROWS_AS(read_png_gray(dir / "broken.png"), IngestionError);
}

TEST_CASE("batches reject mismatched stacks and non-binary masks") {
  const std::vector<GrayImage> images(2, GrayImage(4, 4, 0.5f));
  const std::vector<GrayImage> masks(1, GrayImage(4, 4));
  CHECK_THROWS_AS(make_batch(images, masks, {"a", "a"}, {0, 1}), DimensionError);
  SampleBatch b = make_batch(images, std::vector<GrayImage>(2, GrayImage(4, 4)), {"a", "a"}, {0, 1});
  b.masks.data()[3] = 0.5f;
  CHECK_THROWS_AS(b.validate(), IngestionError);
}

TEST_CASE("leave-one-out folds exclude validation and same-patient volumes") {
  const std::vector<std::string> ids{"P1", "P1post", "P2", "P2post", "P3", "P4", "P5"};
  const auto plan = make_loocv_splits(ids, "P5", {{"P1", "P1post"}, {"P2", "P2post"}});
  CHECK(plan.folds.size() == 6);

  const Fold& p1 = plan.fold_for("P1");
  CHECK(p1.val_volume == "P5");
  CHECK(p1.train_volumes == std::vector<std::string>{"P2", "P2post", "P3", "P4"});
  CHECK(plan.fold_for("P1post").train_volumes == std::vector<std::string>{"P2", "P2post", "P3", "P4"});

  const Fold& p3 = plan.fold_for("P3");
  CHECK(p3.train_volumes == std::vector<std::string>{"P1", "P1post", "P2", "P2post", "P4"});

  for (const Fold& f : plan.folds) {
    CHECK(std::find(f.train_volumes.begin(), f.train_volumes.end(), f.test_volume) == f.train_volumes.end());
    CHECK(std::find(f.train_volumes.begin(), f.train_volumes.end(), "P5") == f.train_volumes.end());
  }
  CHECK_THROWS_AS(plan.fold_for("P5"), ConfigError);

  // seven volumes plus a separate validation volume
  std::vector<std::string> eight = {"P1", "P1post", "P2", "P2post", "P3", "P4", "P5", "P6"};
  const auto plan8 = make_loocv_splits(eight, "P6", {{"P1", "P1post"}, {"P2", "P2post"}});
  CHECK(plan8.folds.size() == 7);
  CHECK(plan8.fold_for("P1").train_volumes == std::vector<std::string>{"P2", "P2post", "P3", "P4", "P5"});
  CHECK(plan8.fold_for("P3").train_volumes ==
        std::vector<std::string>{"P1", "P1post", "P2", "P2post", "P4", "P5"});
  CHECK_THROWS_AS(plan8.fold_for("P6"), ConfigError);
  CHECK_THROWS_AS(plan.fold_for("nope"), ConfigError);
  CHECK_THROWS_AS(make_loocv_splits({"A", "B"}, "B", {}), ConfigError);
  CHECK_THROWS_AS(make_loocv_splits(ids, "Q", {}), ConfigError);
}

}  // TEST_SUITE
