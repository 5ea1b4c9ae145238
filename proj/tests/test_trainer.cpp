#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ie2d/augment.hpp"
#include "ie2d/errors.hpp"
#include "ie2d/evaluation.hpp"
#include "ie2d/model.hpp"
#include "ie2d/synthetic.hpp"
#include "ie2d/trainer.hpp"
#include "test_support.hpp"

using namespace ie2d;
using namespace ie2d::testing;

namespace {

SampleBatch random_batch(int n, int size, std::mt19937_64& rng) {
  SampleBatch b;
  b.images = random_tensor<float>(Shape{n, 1, size, size}, rng);
  b.masks = random_mask<float>(Shape{n, 1, size, size}, rng);
  for (int i = 0; i < n; ++i) {
    b.volume_ids.push_back("v");
    b.slice_indices.push_back(i);
  }
  return b;
}

bool entry_equal(const ParameterEntry<float>& a, const ParameterEntry<float>& b) {
  return bitwise_equal(a.values, b.values);
}

// Worst relative error of central differences over every in-scope parameter.
double model_fd_error(const ModelConfig& c, ParameterStore<double> params, LossName loss,
                      const Tensor<double>& images, const Tensor<double>& masks, SegLossKind kind) {
  const ImitationOptions imit{};
  auto grads = params.zeros_like();
  loss_and_gradients(c, params, loss, images, masks, kind, imit, &grads);
  const LossSpec spec = loss_spec(loss);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto& entry = params.entries()[e];
    const auto& g = grads.entries()[e].values;
    if (!spec.updates(entry.scope)) {
      for (double v : g) REQUIRE(v == 0.0);
      continue;
    }
    for (std::size_t i = 0; i < entry.values.size(); ++i) {
      const double saved = entry.values[i];
      entry.values[i] = saved + h;
      const double up = loss_and_gradients<double>(c, params, loss, images, masks, kind, imit, nullptr);
      entry.values[i] = saved - h;
      const double down = loss_and_gradients<double>(c, params, loss, images, masks, kind, imit, nullptr);
      entry.values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(g[i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - g[i]) / denom);
    }
  }
  return worst;
}

std::vector<Volume> tiny_volumes(int n, int size, std::uint64_t seed) {
  std::vector<Volume> out;
  for (int i = 0; i < n; ++i) {
    auto v = generate_synthetic_volume(seed + i, 4, size);
    v.id = "V" + std::to_string(i);
    out.push_back(std::move(v));
  }
  return out;
}

// Zero-initialized biases leave pre-activations exactly on the ReLU kink
// wherever the input is flat; random biases move them off it.
ParameterStore<double> jitter_biases(ParameterStore<double> params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& e : params.entries())
    if (e.name.ends_with(".bias"))
      for (double& v : e.values) v = u(rng);
  return params;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("each sub-step writes only its own scopes") {
  std::mt19937_64 rng(1);
  const ModelConfig c = tiny_config(16, 2, 2, 3);
  const auto batch = random_batch(2, 16, rng);
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  for (LossName loss : kAllLosses) {
    auto state = make_train_state(c, init_model<float>(c));
    const auto before = state.params;
    const auto moments_before = state.optimizers;
    run_substep(state, batch, loss, tc);
    const LossSpec spec = loss_spec(loss);
    for (std::size_t e = 0; e < before.size(); ++e) {
      const auto& a = before.entries()[e];
      const auto& b = state.params.entries()[e];
      if (!spec.updates(a.scope)) CHECK_MESSAGE(entry_equal(a, b), a.name << " changed under " << loss_name(loss));
    }
    std::size_t changed = 0;
    for (std::size_t e = 0; e < before.size(); ++e)
      changed += !entry_equal(before.entries()[e], state.params.entries()[e]);
    CHECK(changed > 0);
    for (LossName other : kAllLosses) {
      if (other == loss) continue;
      const auto& o = state.optimizers[loss_index(other)];
      CHECK(o.steps() == 0);
      CHECK(o.first_moments() == moments_before[loss_index(other)].first_moments());
    }
  }
}

TEST_CASE("optimizer keeps moments only for in-scope parameters") {
  const ModelConfig c = tiny_config(8, 1, 2, 3);
  const auto params = init_model<float>(c);
  for (LossName loss : kAllLosses) {
    ScopedOptimizer<float> opt(params, loss_spec(loss));
    for (std::size_t e = 0; e < params.size(); ++e) {
      const bool in = loss_spec(loss).updates(params.entries()[e].scope);
      CHECK(opt.first_moments()[e].size() == (in ? params.entries()[e].values.size() : 0));
    }
  }
}

TEST_CASE("adam and sgd updates match hand computation") {
  ParameterStore<double> p;
  p.add("w", Scope::Unet, {2}).values = {1.0, -2.0};
  p.add("frozen", Scope::CaeEncoder, {1}).values = {5.0};
  auto g = p.zeros_like();
  g.at("w").values = {0.5, -0.25};
  g.at("frozen").values = {1.0};

  auto sgd = p;
  ScopedOptimizer<double> s(sgd, loss_spec(LossName::UnetOut));
  s.step(sgd, g, {OptimizerKind::Sgd, 0.1});
  CHECK(sgd.values("w")[0] == doctest::Approx(0.95));
  CHECK(sgd.values("w")[1] == doctest::Approx(-1.975));
  CHECK(sgd.values("frozen")[0] == 5.0);

  auto adam = p;
  ScopedOptimizer<double> a(adam, loss_spec(LossName::UnetOut));
  const OptimizerConfig cfg{OptimizerKind::Adam, 0.01};
  a.step(adam, g, cfg);
  // first bias-corrected step moves each weight by lr * sign(g) (up to eps)
  CHECK(adam.values("w")[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(adam.values("w")[1] == doctest::Approx(-1.99).epsilon(1e-6));
  a.step(adam, g, cfg);
  CHECK(adam.values("w")[0] == doctest::Approx(0.98).epsilon(1e-6));
  CHECK(adam.values("frozen")[0] == 5.0);
}

TEST_CASE("model gradients match finite differences for every loss") {
  std::mt19937_64 rng(3);
  const ModelConfig c = tiny_config(8, 1, 2, 3, 7);
  const auto params = jitter_biases(init_model<double>(c), 7);
  const auto images = random_tensor<double>(Shape{2, 1, 8, 8}, rng);
  const auto masks = random_mask<double>(Shape{2, 1, 8, 8}, rng);
  for (LossName loss : kAllLosses)
    for (SegLossKind kind : {SegLossKind::Dice, SegLossKind::CrossEntropy}) {
      CAPTURE(loss_name(loss));
      CHECK(model_fd_error(c, params, loss, images, masks, kind) < 1e-3);
    }
}

TEST_CASE("gradients at depth 2 with two convs per level") {
  std::mt19937_64 rng(4);
  ModelConfig c = tiny_config(8, 2, 2, 3, 11);
  const auto params = jitter_biases(init_model<double>(c), 11);
  const auto images = random_tensor<double>(Shape{1, 1, 8, 8}, rng);
  const auto masks = random_mask<double>(Shape{1, 1, 8, 8}, rng);
  for (LossName loss : kAllLosses) {
    CAPTURE(loss_name(loss));
    CHECK(model_fd_error(c, params, loss, images, masks, SegLossKind::Dice) < 1e-3);
  }
}

TEST_CASE("a small sgd step lowers the loss it was taken on") {
  std::mt19937_64 rng(5);
  TrainConfig tc;
  tc.optimizer = OptimizerKind::Sgd;
  tc.learning_rate = 1e-3;
  int trials = 0, descended = 0;
  for (int t = 0; t < 100; ++t) {
    const LossName loss = kAllLosses[t % 4];
    ModelConfig c = tiny_config(8, 1, 2, 3, 100 + t);
    auto state = make_train_state(c, init_model<double>(c));
    const auto batch = random_batch(2, 8, rng);
    const auto images = batch.images.cast<double>();
    const auto masks = batch.masks.cast<double>();
    const double before = run_substep(state, batch, loss, tc);
    const double after = loss_and_gradients<double>(c, state.params, loss, images, masks, tc.loss_kind,
                                                    tc.imitation, nullptr);
    ++trials;
    descended += after < before;
  }
  CHECK(descended >= 95 * trials / 100);
}

TEST_CASE("non-finite inputs abort naming the loss") {
  std::mt19937_64 rng(6);
  const ModelConfig c = tiny_config(8, 1, 2, 3);
  auto state = make_train_state(c, init_model<float>(c));
  auto batch = random_batch(1, 8, rng);
  batch.images.data()[5] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  try {
    run_substep(state, batch, LossName::UnetOut, tc);
    FAIL("expected TrainingAbort");
  } catch (const TrainingAbort& e) {
    CHECK(e.loss() == "UNET_OUT");
  }
  auto bad_weights = make_train_state(c, init_model<float>(c));
  bad_weights.params.entries().front().values[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(train_step(bad_weights, random_batch(1, 8, rng), tc), TrainingAbort);
}

TEST_CASE("augmentation: identity, binary masks, integer shifts") {
  std::mt19937_64 rng(7);
  GrayImage image(16, 16), mask(16, 16);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : image.pixels) v = u(rng);
  for (int y = 4; y < 12; ++y)
    for (int x = 5; x < 10; ++x) mask.at(x, y) = 1.0f;

  auto [i0, m0] = warp_pair(image, mask, {});
  CHECK(i0 == image);
  CHECK(m0 == mask);

  for (int t = 0; t < 50; ++t) {
    auto [img, m] = augment(image, mask, rng, 15.0, 0.1);
    for (float v : m.pixels) CHECK((v == 0.0f || v == 1.0f));
    for (float v : img.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  }

  // +k then -k restores everything that never left the frame
  const int k = 3;
  auto [fwd_img, fwd_mask] = warp_pair(image, mask, {0.0, double(k), -double(k)});
  CHECK(fwd_img.at(k, 0) == image.at(0, k));
  auto [back_img, back_mask] = warp_pair(fwd_img, fwd_mask, {0.0, -double(k), double(k)});
  for (int y = k; y < 16 - k; ++y)
    for (int x = k; x < 16 - k; ++x) {
      CHECK(back_img.at(x, y) == doctest::Approx(image.at(x, y)).epsilon(1e-6));
      CHECK(back_mask.at(x, y) == mask.at(x, y));
    }

  // 90-degree rotation of an even square is an exact pixel permutation
  auto [rot, rot_mask] = warp_pair(image, mask, {90.0, 0, 0});
  auto [rot_back, rot_mask_back] = warp_pair(rot, rot_mask, {-90.0, 0, 0});
  CHECK(rot_mask_back == mask);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    CHECK(rot_back.pixels[i] == doctest::Approx(image.pixels[i]).epsilon(1e-5));
}

TEST_CASE("transform sampling stays within its ranges") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 500; ++t) {
    const auto tr = sample_transform(rng, 15.0, 0.1, 64, 32);
    CHECK(std::abs(tr.rotation_deg) <= 15.0);
    CHECK(std::abs(tr.shift_x) <= 6.4);
    CHECK(std::abs(tr.shift_y) <= 3.2);
  }
}

TEST_CASE("fit records every epoch and keeps the best validation checkpoint") {
  const auto volumes = tiny_volumes(3, 16, 40);
  const std::vector<Volume> train(volumes.begin(), volumes.begin() + 2), val{volumes[2]};
  const ModelConfig c = tiny_config(16, 2, 4, 3, 3);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 3;
  tc.learning_rate = 1e-3;
  int callbacks = 0;
  const auto result = fit(train, val, c, tc, [&](const EpochRecord& r, const TrainState<float>&) {
    CHECK(r.epoch == ++callbacks);
  });
  CHECK(callbacks == 4);
  REQUIRE(result.history.size() == 4);
  double best = -1;
  int best_epoch = -1;
  for (const auto& r : result.history) {
    for (double l : r.loss) CHECK(std::isfinite(l));
    if (r.val_dsc_ie2d > best) {
      best = r.val_dsc_ie2d;
      best_epoch = r.epoch;
    }
  }
  CHECK(result.state.best_val_dsc == best);
  CHECK(result.state.best_epoch == best_epoch);
  const auto score = evaluate_volume(c, result.state.best_params, val[0]);
  CHECK(score.ie2d == doctest::Approx(best));

  const std::string csv = format_history_csv(result.history);
  CHECK(csv.starts_with("epoch,loss_unet,loss_cae,loss_ie2d,loss_imit,val_dsc_unet,val_dsc_ie2d\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  SUBCASE("training is deterministic for a fixed seed") {
    const auto again = fit(train, val, c, tc);
    CHECK(again.history == result.history);
    CHECK(again.state.params == result.state.params);
  }
  SUBCASE("per-epoch alternation also runs") {
    TrainConfig pe = tc;
    pe.alternation = Alternation::PerEpoch;
    pe.epochs = 2;
    CHECK(fit(train, val, c, pe).history.size() == 2);
  }
}

TEST_CASE("fit rejects empty and overlapping sets") {
  const auto volumes = tiny_volumes(2, 16, 50);
  const ModelConfig c = tiny_config(16, 1, 2, 3);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(fit({}, {volumes[1]}, c, tc), ConfigError);
  CHECK_THROWS_AS(fit({volumes[0]}, {}, c, tc), ConfigError);
  CHECK_THROWS_AS(fit(volumes, {volumes[1]}, c, tc), ConfigError);
}

TEST_CASE("train config JSON and validation") {
  TrainConfig tc;
  CHECK(tc.optimizer == OptimizerKind::Adam);
  CHECK(tc.learning_rate == 1e-4);
  CHECK(tc.batch_size == 8);
  CHECK(tc.epochs == 50);
  CHECK(tc.aug_rotation_deg == 15.0);
  CHECK(tc.aug_translate_frac == 0.1);
  tc.optimizer = OptimizerKind::Sgd;
  tc.loss_kind = SegLossKind::CrossEntropy;
  tc.alternation = Alternation::PerEpoch;
  tc.step_order = {LossName::Imitation, LossName::CaeOut, LossName::UnetOut, LossName::Ie2dOut};
  tc.imitation = {true, true};
  CHECK(train_config_from_json(to_json(tc)) == tc);

  CHECK_THROWS_AS(train_config_from_json({{"optimizer", "rmsprop"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"unknown_key", 1}}), ConfigError);
  TrainConfig bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.step_order = {LossName::UnetOut, LossName::UnetOut, LossName::Ie2dOut, LossName::Imitation};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
