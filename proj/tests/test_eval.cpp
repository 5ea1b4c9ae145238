#include <doctest.h>

#include <random>

#include "ie2d/errors.hpp"
#include "ie2d/evaluation.hpp"
#include "ie2d/model.hpp"
#include "ie2d/synthetic.hpp"
#include "test_support.hpp"

using namespace ie2d;
using namespace ie2d::testing;

namespace {

GrayImage block(int size, int x0, int x1, int y0, int y1) {
  GrayImage m(size, size);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(x, y) = 1.0f;
  return m;
}

std::span<const float> px(const GrayImage& g) { return g.pixels; }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("binary dice on hand-counted masks") {
  const GrayImage a = block(8, 0, 4, 0, 4);  // 16 px
  const GrayImage b = block(8, 2, 6, 0, 4);  // 16 px, 8 shared
  CHECK(binary_dice(px(a), px(a)) == 1.0);
  CHECK(binary_dice(px(a), px(b)) == doctest::Approx(0.5));
  CHECK(binary_dice(px(a), px(block(8, 4, 8, 4, 8))) == 0.0);
  CHECK(binary_dice(px(GrayImage(8, 8)), px(GrayImage(8, 8))) == 1.0);
  // probabilities binarize at 0.5
  GrayImage soft = a;
  for (float& v : soft.pixels) v = v == 1.0f ? 0.7f : 0.3f;
  CHECK(binary_dice(px(soft), px(a)) == 1.0);
  CHECK_THROWS_AS(binary_dice(px(a), px(GrayImage(4, 4))), DimensionError);
}

TEST_CASE("volume dice: identical, all background, and the two aggregations") {
  const std::vector<GrayImage> truth{block(8, 0, 4, 0, 4), block(8, 0, 2, 0, 2)};
  CHECK(volume_dice(truth, truth) == 1.0);
  const std::vector<GrayImage> empty(2, GrayImage(8, 8));
  CHECK(volume_dice(empty, truth) == 0.0);

  // slice 0 perfect (16 px), slice 1 misses all 4 px
  const std::vector<GrayImage> pred{truth[0], GrayImage(8, 8)};
  CHECK(volume_dice(pred, truth, DiceAggregation::SliceMean) == doctest::Approx(0.5));
  CHECK(volume_dice(pred, truth, DiceAggregation::Pooled) == doctest::Approx(2.0 * 16 / (16 + 20)));
  CHECK_THROWS_AS(volume_dice(std::vector<GrayImage>(1, GrayImage(8, 8)), truth), DimensionError);
}

TEST_CASE("evaluate_volume scores both heads") {
  const ModelConfig c = tiny_config(16, 2, 2, 3);
  const auto params = init_model<float>(c);
  const auto v = generate_synthetic_volume(3, 5, 16);
  const auto score = evaluate_volume(c, params, v, DiceAggregation::SliceMean, 2);
  const auto again = evaluate_volume(c, params, v, DiceAggregation::SliceMean, 8);
  CHECK(score.unet == again.unet);
  CHECK(score.ie2d == again.ie2d);
  for (double d : {score.unet, score.ie2d}) CHECK((d >= 0.0 && d <= 1.0));
}

TEST_CASE("report: mean and population std of two folds") {
  EvalReport r{{"dsc_unet", "dsc_ie2d"}, {{"P1", {0.6, 0.8}}, {"P2", {0.8, 0.8}}}};
  CHECK(r.mean()[0] == doctest::Approx(0.7));
  CHECK(r.stddev()[0] == doctest::Approx(0.1));
  CHECK(r.stddev()[1] == doctest::Approx(0.0));
  const std::string csv = format_report_csv(r);
  CHECK(csv == "volume,dsc_unet,dsc_ie2d\n"
               "P1,60.00,80.00\n"
               "P2,80.00,80.00\n"
               "mean \xC2\xB1 std,70.00 \xC2\xB1 10.00,80.00 \xC2\xB1 0.00\n");

  const auto dir = temp_dir("report");
  write_report_csv(dir / "r.csv", r);
  const auto parsed = read_report_csv(dir / "r.csv");
  CHECK(parsed.columns == r.columns);
  REQUIRE(parsed.rows.size() == 2);
  CHECK(parsed.rows[1].first == "P2");
  CHECK(parsed.rows[0].second == std::vector<double>{60.0, 80.0});
  CHECK(parsed.mean == std::vector<double>{70.0, 80.0});
  CHECK(parsed.stddev == std::vector<double>{10.0, 0.0});
}

TEST_CASE("report: a single fold has zero spread") {
  EvalReport r{{"dsc"}, {{"P1", {0.9123}}}};
  CHECK(format_report_csv(r).ends_with("P1,91.23\nmean \xC2\xB1 std,91.23 \xC2\xB1 0.00\n"));
}

TEST_CASE("overlay panels") {
  std::mt19937_64 rng(2);
  GrayImage image(6, 5);
  std::uniform_real_distribution<float> u(0, 1);
  for (float& v : image.pixels) v = u(rng);
  const GrayImage none(6, 5), all(6, 5, 1.0f);

  const RgbImage plain = render_overlay(image, &none, none, none);
  CHECK(plain.width == 4 * 6 + 3 * kOverlayGutter);
  CHECK(plain.height == 5);
  for (int p = 0; p < 4; ++p)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        const auto* q = plain.pixel(p * (6 + kOverlayGutter) + x, y);
        const auto g = static_cast<std::uint8_t>(std::lround(image.at(x, y) * 255.0));
        CHECK(q[0] == g);
        CHECK(q[1] == g);
        CHECK(q[2] == g);
      }
  // gutters are white
  CHECK(plain.pixel(6, 0)[0] == 255);

  const GrayImage flat(6, 5, 0.2f);
  const RgbImage tinted = render_overlay(flat, &all, all, all);
  const int expected_green[3] = {static_cast<int>(std::lround(0.5 * 51)), static_cast<int>(std::lround(0.5 * 51 + 127.5)),
                                 static_cast<int>(std::lround(0.5 * 51))};
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      const auto* g = tinted.pixel(6 + kOverlayGutter + x, y);
      for (int ch = 0; ch < 3; ++ch) CHECK(g[ch] == expected_green[ch]);
      CHECK(tinted.pixel(2 * (6 + kOverlayGutter) + x, y)[0] > tinted.pixel(2 * (6 + kOverlayGutter) + x, y)[1]);
      CHECK(tinted.pixel(3 * (6 + kOverlayGutter) + x, y)[2] > tinted.pixel(3 * (6 + kOverlayGutter) + x, y)[0]);
    }

  const RgbImage no_truth = render_overlay(image, nullptr, none, none);
  CHECK(no_truth.width == 3 * 6 + 2 * kOverlayGutter);
  CHECK_THROWS_AS(render_overlay(image, nullptr, GrayImage(3, 3), none), DimensionError);
}

}  // TEST_SUITE
