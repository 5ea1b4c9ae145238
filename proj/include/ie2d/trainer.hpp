#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ie2d/config.hpp"
#include "ie2d/dataset.hpp"
#include "ie2d/losses.hpp"
#include "ie2d/optimizer.hpp"
#include "ie2d/parameter_store.hpp"

namespace ie2d {

// Whether the four losses alternate per batch or take turns over whole epochs.
enum class Alternation { PerBatch, PerEpoch };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-4;
  int batch_size = 8;
  int epochs = 50;
  std::array<LossName, 4> step_order = {LossName::UnetOut, LossName::CaeOut, LossName::Ie2dOut,
                                        LossName::Imitation};
  double aug_rotation_deg = 15.0;
  double aug_translate_frac = 0.1;
  std::uint64_t seed = 0;
  SegLossKind loss_kind = SegLossKind::Dice;
  ImitationOptions imitation;
  Alternation alternation = Alternation::PerBatch;

  void validate() const;  // throws ConfigError
  OptimizerConfig optimizer_config() const;
  bool operator==(const TrainConfig&) const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

inline constexpr std::size_t loss_index(LossName name) { return static_cast<std::size_t>(name); }

template <typename T>
struct TrainState {
  ModelConfig model;
  ParameterStore<T> params;
  std::array<ScopedOptimizer<T>, 4> optimizers;  // indexed by loss_index()
  int epoch = 0;
  // Sums and counts of sub-step losses since the last reset_running().
  std::array<double, 4> loss_sum{};
  std::array<std::int64_t, 4> loss_count{};
  double best_val_dsc = -1.0;
  int best_epoch = -1;
  ParameterStore<T> best_params;

  double running_average(LossName name) const;
  void reset_running();
};

template <typename T>
TrainState<T> make_train_state(const ModelConfig& model, ParameterStore<T> params);

// Computes one loss on (images, masks) and, when `grads` is non-null,
// d(loss)/d(params) for the parameters in the loss's scopes. `grads` must be a
// zeroed store with the layout of `params`; out-of-scope entries stay zero.
template <typename T>
double loss_and_gradients(const ModelConfig& config, const ParameterStore<T>& params,
                          LossName loss, const Tensor<T>& images, const Tensor<T>& masks,
                          SegLossKind kind, const ImitationOptions& imitation,
                          ParameterStore<T>* grads);

// One forward/backward/update cycle for a single loss. Only parameters in the
// loss's scopes change. Throws TrainingAbort on a non-finite loss or gradient.
template <typename T>
double run_substep(TrainState<T>& state, const SampleBatch& batch, LossName loss,
                   const TrainConfig& config);

// All four sub-steps in config.step_order. Returns losses indexed by loss_index().
template <typename T>
std::array<double, 4> train_step(TrainState<T>& state, const SampleBatch& batch,
                                 const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  std::array<double, 4> loss{};  // indexed by loss_index()
  double val_dsc_unet = 0.0;
  double val_dsc_ie2d = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct FitResult {
  TrainState<float> state;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&, const TrainState<float>&)>;

// Trains on shuffled, augmented mini-batches; after every epoch scores both
// heads on `val` and keeps the parameters with the best IE2D validation DSC.
FitResult fit(const std::vector<Volume>& train, const std::vector<Volume>& val,
              const ModelConfig& model, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

// "epoch,loss_unet,loss_cae,loss_ie2d,loss_imit,val_dsc_unet,val_dsc_ie2d" header
// plus one row per epoch.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
std::string format_history_csv(const std::vector<EpochRecord>& history);

extern template struct TrainState<float>;
extern template struct TrainState<double>;

}  // namespace ie2d
