#include "ie2d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "ie2d/augment.hpp"
#include "ie2d/errors.hpp"
#include "ie2d/evaluation.hpp"
#include "ie2d/model.hpp"

namespace ie2d {
namespace {

template <typename T>
Tensor<T> as(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<T>();
  }
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }
std::string loss_kind_name(SegLossKind k) {
  return k == SegLossKind::Dice ? "dice" : "cross_entropy";
}
std::string alternation_name(Alternation a) {
  return a == Alternation::PerBatch ? "per_batch" : "per_epoch";
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid train config: " + what);
  };
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(aug_rotation_deg >= 0.0, "aug_rotation_deg must be >= 0");
  require(aug_translate_frac >= 0.0 && aug_translate_frac < 1.0,
          "aug_translate_frac must be in [0, 1)");
  const std::set<LossName> distinct(step_order.begin(), step_order.end());
  require(distinct.size() == 4, "step_order must contain each loss exactly once");
}

OptimizerConfig TrainConfig::optimizer_config() const {
  OptimizerConfig c;
  c.kind = optimizer;
  c.learning_rate = learning_rate;
  return c;
}

bool TrainConfig::operator==(const TrainConfig& o) const {
  return to_json(*this) == to_json(o);
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json order = nlohmann::json::array();
  for (LossName l : c.step_order) order.push_back(std::string(loss_name(l)));
  return {{"optimizer", optimizer_name(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"step_order", order},
          {"aug_rotation_deg", c.aug_rotation_deg},
          {"aug_translate_frac", c.aug_translate_frac},
          {"seed", c.seed},
          {"loss_kind", loss_kind_name(c.loss_kind)},
          {"imitation_squared", c.imitation.squared},
          {"imitation_normalize", c.imitation.normalize},
          {"alternation", alternation_name(c.alternation)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "optimizer") {
        const auto v = value.get<std::string>();
        if (v == "adam") c.optimizer = OptimizerKind::Adam;
        else if (v == "sgd") c.optimizer = OptimizerKind::Sgd;
        else throw ConfigError("optimizer must be 'adam' or 'sgd'");
      } else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "step_order") {
        const auto names = value.get<std::vector<std::string>>();
        if (names.size() != 4) throw ConfigError("step_order must list 4 losses");
        for (std::size_t i = 0; i < 4; ++i) c.step_order[i] = parse_loss_name(names[i]);
      } else if (key == "aug_rotation_deg") c.aug_rotation_deg = value.get<double>();
      else if (key == "aug_translate_frac") c.aug_translate_frac = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "loss_kind") {
        const auto v = value.get<std::string>();
        if (v == "dice") c.loss_kind = SegLossKind::Dice;
        else if (v == "cross_entropy") c.loss_kind = SegLossKind::CrossEntropy;
        else throw ConfigError("loss_kind must be 'dice' or 'cross_entropy'");
      } else if (key == "imitation_squared") c.imitation.squared = value.get<bool>();
      else if (key == "imitation_normalize") c.imitation.normalize = value.get<bool>();
      else if (key == "alternation") {
        const auto v = value.get<std::string>();
        if (v == "per_batch") c.alternation = Alternation::PerBatch;
        else if (v == "per_epoch") c.alternation = Alternation::PerEpoch;
        else throw ConfigError("alternation must be 'per_batch' or 'per_epoch'");
      } else throw ConfigError("unknown train config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
  return c;
}

template <typename T>
double TrainState<T>::running_average(LossName name) const {
  const auto i = loss_index(name);
  return loss_count[i] ? loss_sum[i] / static_cast<double>(loss_count[i]) : 0.0;
}

template <typename T>
void TrainState<T>::reset_running() {
  loss_sum.fill(0.0);
  loss_count.fill(0);
}

template <typename T>
TrainState<T> make_train_state(const ModelConfig& model, ParameterStore<T> params) {
  TrainState<T> state;
  state.model = model;
  for (LossName l : kAllLosses)
    state.optimizers[loss_index(l)] = ScopedOptimizer<T>(params, loss_spec(l));
  state.params = std::move(params);
  state.best_params = state.params;
  return state;
}

template <typename T>
double loss_and_gradients(const ModelConfig& config, const ParameterStore<T>& params,
                          LossName loss, const Tensor<T>& images, const Tensor<T>& masks,
                          SegLossKind kind, const ImitationOptions& imitation,
                          ParameterStore<T>* grads) {
  net::check_input(config, images, "image batch");
  net::check_input(config, masks, "mask batch");
  if (images.n() != masks.n()) throw DimensionError("image and mask batch sizes differ");
  if (grads && !grads->same_layout(params))
    throw DimensionError("gradient store layout differs from parameters");

  const bool backward = grads != nullptr;
  net::EncoderTrace<T> enc;
  net::DecoderTrace<T> dec;
  Tensor<T> dprobs;
  double value = 0.0;

  switch (loss) {
    case LossName::UnetOut: {
      auto [skips, code] =
          net::encode<T>(config, params, prefix::kUnetEncoder, images, backward ? &enc : nullptr);
      const auto probs = net::decode<T>(config, params, prefix::kUnetDecoder, code, skips,
                                     backward ? &dec : nullptr);
      value = segmentation_loss(kind, probs, masks, backward ? &dprobs : nullptr);
      if (!backward) break;
      FeaturePyramid<T> dskips;
      const Tensor<T> dcode = net::decode_backward<T>(config, params, prefix::kUnetDecoder, dec,
                                                   dprobs, *grads, &dskips);
      net::encode_backward<T>(config, params, prefix::kUnetEncoder, enc, dcode, &dskips, *grads);
      break;
    }
    case LossName::CaeOut:
    case LossName::Ie2dOut: {
      // U-Net features enter as constants: no trace, no backward through them.
      const auto skips = net::encode<T>(config, params, prefix::kUnetEncoder, images, nullptr).first;
      const bool cae = loss == LossName::CaeOut;
      const auto enc_prefix = cae ? prefix::kCaeEncoder : prefix::kImitatingEncoder;
      const auto code =
          net::encode<T>(config, params, enc_prefix, cae ? masks : images, backward ? &enc : nullptr)
              .second;
      const auto probs = net::decode<T>(config, params, prefix::kCaeDecoder, code, skips,
                                     backward ? &dec : nullptr);
      value = segmentation_loss(kind, probs, masks, backward ? &dprobs : nullptr);
      if (!backward) break;
      const Tensor<T> dcode = net::decode_backward<T>(config, params, prefix::kCaeDecoder, dec,
                                                   dprobs, *grads, nullptr);
      net::encode_backward<T>(config, params, enc_prefix, enc, dcode, nullptr, *grads);
      break;
    }
    case LossName::Imitation: {
      // The CAE code is a fixed target.
      const auto target =
          net::encode<T>(config, params, prefix::kCaeEncoder, masks, nullptr).second;
      const auto code = net::encode<T>(config, params, prefix::kImitatingEncoder, images,
                                    backward ? &enc : nullptr)
                            .second;
      Tensor<T> dcode;
      value = imitation_loss(code.values, target.values, backward ? &dcode : nullptr, imitation);
      if (!backward) break;
      net::encode_backward<T>(config, params, prefix::kImitatingEncoder, enc, dcode, nullptr,
                           *grads);
      break;
    }
  }
  return value;
}

template <typename T>
double run_substep(TrainState<T>& state, const SampleBatch& batch, LossName loss,
                   const TrainConfig& config) {
  const std::string name(loss_name(loss));
  ParameterStore<T> grads = state.params.zeros_like();
  const double value =
      loss_and_gradients(state.model, state.params, loss, as<T>(batch.images), as<T>(batch.masks),
                         config.loss_kind, config.imitation, &grads);
  if (!std::isfinite(value))
    throw TrainingAbort(name, "non-finite " + name + " loss (" + std::to_string(value) + ")");
  auto& optimizer = state.optimizers[loss_index(loss)];
  for (const auto& g : grads.entries()) {
    if (!optimizer.spec().updates(g.scope)) continue;
    for (T v : g.values)
      if (!std::isfinite(v))
        throw TrainingAbort(name, "non-finite gradient for " + g.name + " in " + name + " loss");
  }
  optimizer.step(state.params, grads, config.optimizer_config());
  state.loss_sum[loss_index(loss)] += value;
  ++state.loss_count[loss_index(loss)];
  return value;
}

template <typename T>
std::array<double, 4> train_step(TrainState<T>& state, const SampleBatch& batch,
                                 const TrainConfig& config) {
  std::array<double, 4> losses{};
  for (LossName l : config.step_order) losses[loss_index(l)] = run_substep(state, batch, l, config);
  return losses;
}

FitResult fit(const std::vector<Volume>& train, const std::vector<Volume>& val,
              const ModelConfig& model, const TrainConfig& config, const EpochCallback& on_epoch) {
  model.validate();
  config.validate();
  std::vector<SampleRef> refs;
  for (std::size_t v = 0; v < train.size(); ++v)
    for (std::size_t s = 0; s < train[v].slices(); ++s)
      refs.push_back({static_cast<int>(v), static_cast<int>(s)});
  if (refs.empty()) throw ConfigError("training set is empty");
  if (val.empty()) throw ConfigError("validation set is empty");
  for (const auto& v : train)
    for (const auto& w : val)
      if (v.id == w.id) throw ConfigError("volume '" + v.id + "' is in both train and val sets");

  FitResult result{make_train_state(model, init_model<float>(model)), {}};
  TrainState<float>& state = result.state;
  std::mt19937_64 rng(config.seed);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    state.reset_running();
    std::shuffle(refs.begin(), refs.end(), rng);
    std::vector<SampleBatch> batches;
    for (std::size_t start = 0; start < refs.size(); start += config.batch_size) {
      const std::size_t end = std::min(refs.size(), start + config.batch_size);
      std::vector<GrayImage> images, masks;
      std::vector<std::string> ids;
      std::vector<int> slices;
      for (std::size_t i = start; i < end; ++i) {
        const Volume& v = train[refs[i].volume];
        auto [image, mask] = augment(v.images[refs[i].slice], v.masks[refs[i].slice], rng,
                                     config.aug_rotation_deg, config.aug_translate_frac);
        images.push_back(std::move(image));
        masks.push_back(std::move(mask));
        ids.push_back(v.id);
        slices.push_back(refs[i].slice);
      }
      batches.push_back(make_batch(images, masks, std::move(ids), std::move(slices)));
    }

    if (config.alternation == Alternation::PerBatch) {
      for (const auto& b : batches) train_step(state, b, config);
    } else {
      for (LossName l : config.step_order)
        for (const auto& b : batches) run_substep(state, b, l, config);
    }

    EpochRecord record;
    record.epoch = epoch;
    for (LossName l : kAllLosses) record.loss[loss_index(l)] = state.running_average(l);
    for (const Volume& v : val) {
      const VolumeScore score = evaluate_volume(model, state.params, v);
      record.val_dsc_unet += score.unet;
      record.val_dsc_ie2d += score.ie2d;
    }
    record.val_dsc_unet /= static_cast<double>(val.size());
    record.val_dsc_ie2d /= static_cast<double>(val.size());

    state.epoch = epoch;
    if (record.val_dsc_ie2d > state.best_val_dsc) {
      state.best_val_dsc = record.val_dsc_ie2d;
      state.best_epoch = epoch;
      state.best_params = state.params;
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record, state);
  }
  return result;
}

std::string format_history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,loss_unet,loss_cae,loss_ie2d,loss_imit,val_dsc_unet,val_dsc_ie2d\n";
  os << std::setprecision(10);
  for (const auto& r : history) {
    os << r.epoch;
    for (LossName l : kAllLosses) os << ',' << r.loss[loss_index(l)];
    os << ',' << r.val_dsc_unet << ',' << r.val_dsc_ie2d << '\n';
  }
  return os.str();
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  out << format_history_csv(history);
}

template struct TrainState<float>;
template struct TrainState<double>;

#define IE2D_INSTANTIATE(T)                                                                      \
  template TrainState<T> make_train_state(const ModelConfig&, ParameterStore<T>);                \
  template double loss_and_gradients(const ModelConfig&, const ParameterStore<T>&, LossName,     \
                                     const Tensor<T>&, const Tensor<T>&, SegLossKind,            \
                                     const ImitationOptions&, ParameterStore<T>*);               \
  template double run_substep(TrainState<T>&, const SampleBatch&, LossName, const TrainConfig&); \
  template std::array<double, 4> train_step(TrainState<T>&, const SampleBatch&, const TrainConfig&);

IE2D_INSTANTIATE(float)
IE2D_INSTANTIATE(double)
#undef IE2D_INSTANTIATE

}  // namespace ie2d
