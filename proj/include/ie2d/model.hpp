#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ie2d/config.hpp"
#include "ie2d/parameter_store.hpp"
#include "ie2d/tensor.hpp"

namespace ie2d {

// Contracting-path features captured right before each pooling,
// level i shaped (N, base*2^i, size/2^i, size/2^i).
template <typename T>
struct FeaturePyramid {
  std::vector<Tensor<T>> levels;
};

// Bottleneck feature map (N, base*2^(depth-1), size/2^depth, size/2^depth).
template <typename T>
struct LatentCode {
  Tensor<T> values;

  // Flattened view of sample n, used by the imitation loss.
  std::span<const T> flat(int n = 0) const { return values.sample(n); }
};

// Per-pixel foreground probabilities (N, output_classes, size, size).
template <typename T>
using SegmentationMap = Tensor<T>;

template <typename T>
struct InferenceResult {
  SegmentationMap<T> ie2d;
  SegmentationMap<T> unet;
};

// Parameter-name prefixes of the five sub-networks.
namespace prefix {
inline constexpr std::string_view kUnetEncoder = "unet.enc";
inline constexpr std::string_view kUnetDecoder = "unet.dec";
inline constexpr std::string_view kCaeEncoder = "cae.enc";
inline constexpr std::string_view kCaeDecoder = "cae.dec";
inline constexpr std::string_view kImitatingEncoder = "imit.enc";
}  // namespace prefix

enum class LayerKind { Conv, UpConv, OutConv };

struct LayerSpec {
  std::string name;  // parameters are <name>.weight and <name>.bias
  Scope scope;
  LayerKind kind;
  int in_channels;
  int out_channels;
  int kernel;
};

// Every layer of the three sub-networks, in parameter-store order.
std::vector<LayerSpec> network_layout(const ModelConfig& config);

// conv: [out][in][k][k]; upconv: [in][out][2][2]; output conv: [out][in][1][1].
std::vector<int> weight_shape(const LayerSpec& layer);

// Zero-valued store with the full layout of `config`.
template <typename T>
ParameterStore<T> empty_model(const ModelConfig& config);

// Deterministic in config.seed; He-normal weights, zero biases.
template <typename T>
ParameterStore<T> init_model(const ModelConfig& config);

// Inputs are (N, 1, size, size) batches. All ops throw DimensionError on shape
// mismatches and never modify the parameters.
template <typename T>
std::pair<SegmentationMap<T>, FeaturePyramid<T>> unet_forward(const ModelConfig& config,
                                                              const ParameterStore<T>& params,
                                                              const Tensor<T>& image);

template <typename T>
LatentCode<T> cae_encode(const ModelConfig& config, const ParameterStore<T>& params,
                         const Tensor<T>& mask);

template <typename T>
SegmentationMap<T> decode_with_skips(const ModelConfig& config, const ParameterStore<T>& params,
                                     const LatentCode<T>& code, const FeaturePyramid<T>& skips);

template <typename T>
LatentCode<T> imitating_encode(const ModelConfig& config, const ParameterStore<T>& params,
                               const Tensor<T>& image);

// Inference wiring: U-Net features plus the imitating encoder's code feed the
// CAE decoder. The CAE encoder is never evaluated.
template <typename T>
InferenceResult<T> ie2d_infer(const ModelConfig& config, const ParameterStore<T>& params,
                              const Tensor<T>& image);

// Lower-level building blocks with activation traces, used for training.
namespace net {

template <typename T>
struct EncoderTrace {
  // acts[level][0] is the level input, acts[level][j + 1] the ReLU output of conv j.
  std::vector<std::vector<Tensor<T>>> acts;
  std::vector<std::vector<std::uint8_t>> argmax;
};

template <typename T>
struct DecoderTrace {
  struct Level {
    Tensor<T> up_in;
    Tensor<T> cat;
    std::vector<Tensor<T>> acts;
  };
  std::vector<Level> levels;  // indexed by resolution level
  Tensor<T> probs;
};

template <typename T>
void check_input(const ModelConfig& config, const Tensor<T>& input, std::string_view what);

template <typename T>
std::pair<FeaturePyramid<T>, LatentCode<T>> encode(const ModelConfig& config,
                                                   const ParameterStore<T>& params,
                                                   std::string_view prefix,
                                                   const Tensor<T>& input,
                                                   EncoderTrace<T>* trace);

template <typename T>
SegmentationMap<T> decode(const ModelConfig& config, const ParameterStore<T>& params,
                          std::string_view prefix, const LatentCode<T>& code,
                          const FeaturePyramid<T>& skips, DecoderTrace<T>* trace);

// Backpropagates d(loss)/d(probs) through a traced decoder. Parameter gradients
// accumulate into `grads` under `prefix`. Skip-feature gradients are written to
// `dskips` when non-null and dropped otherwise. Returns d(loss)/d(code).
template <typename T>
Tensor<T> decode_backward(const ModelConfig& config, const ParameterStore<T>& params,
                          std::string_view prefix, const DecoderTrace<T>& trace,
                          const Tensor<T>& dprobs, ParameterStore<T>& grads,
                          FeaturePyramid<T>* dskips);

// `dskips` (optional) adds gradient arriving at the captured skip features.
template <typename T>
void encode_backward(const ModelConfig& config, const ParameterStore<T>& params,
                     std::string_view prefix, const EncoderTrace<T>& trace,
                     const Tensor<T>& dcode, const FeaturePyramid<T>* dskips,
                     ParameterStore<T>& grads);

}  // namespace net
}  // namespace ie2d
