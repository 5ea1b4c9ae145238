#include "ie2d/model.hpp"

#include <cmath>
#include <random>

#include "ie2d/errors.hpp"
#include "ie2d/layers.hpp"

namespace ie2d {
namespace {

std::string conv_name(std::string_view prefix, int level, int j) {
  return std::string(prefix) + ".l" + std::to_string(level) + ".conv" + std::to_string(j);
}
std::string up_name(std::string_view prefix, int level) {
  return std::string(prefix) + ".l" + std::to_string(level) + ".up";
}
std::string out_name(std::string_view prefix) { return std::string(prefix) + ".out"; }

void add_encoder(std::vector<LayerSpec>& layout, const ModelConfig& c, std::string_view prefix,
                 Scope scope) {
  for (int level = 0; level < c.depth; ++level) {
    const int ch = c.level_channels(level);
    for (int j = 0; j < c.convs_per_level; ++j) {
      const int cin = j > 0 ? ch : (level == 0 ? 1 : c.level_channels(level - 1));
      layout.push_back({conv_name(prefix, level, j), scope, LayerKind::Conv, cin, ch, c.kernel_size});
    }
  }
}

void add_decoder(std::vector<LayerSpec>& layout, const ModelConfig& c, std::string_view prefix,
                 Scope scope) {
  for (int level = c.depth - 1; level >= 0; --level) {
    const int ch = c.level_channels(level);
    const int up_in = level == c.depth - 1 ? c.latent_channels() : c.level_channels(level + 1);
    layout.push_back({up_name(prefix, level), scope, LayerKind::UpConv, up_in, ch, 2});
    for (int j = 0; j < c.convs_per_level; ++j) {
      const int cin = j == 0 ? 2 * ch : ch;
      layout.push_back({conv_name(prefix, level, j), scope, LayerKind::Conv, cin, ch, c.kernel_size});
    }
  }
  layout.push_back({out_name(prefix), scope, LayerKind::OutConv, c.base_channels,
                    c.output_classes, 1});
}

template <typename T>
std::span<const T> weight(const ParameterStore<T>& p, const std::string& layer) {
  return p.values(layer + ".weight");
}
template <typename T>
std::span<const T> bias(const ParameterStore<T>& p, const std::string& layer) {
  return p.values(layer + ".bias");
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape()) throw DimensionError("gradient shape mismatch");
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

std::vector<LayerSpec> network_layout(const ModelConfig& config) {
  config.validate();
  std::vector<LayerSpec> layout;
  add_encoder(layout, config, prefix::kUnetEncoder, Scope::Unet);
  add_decoder(layout, config, prefix::kUnetDecoder, Scope::Unet);
  add_encoder(layout, config, prefix::kCaeEncoder, Scope::CaeEncoder);
  add_decoder(layout, config, prefix::kCaeDecoder, Scope::CaeDecoder);
  add_encoder(layout, config, prefix::kImitatingEncoder, Scope::ImitatingEncoder);
  return layout;
}

std::vector<int> weight_shape(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::Conv:
      return {layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
    case LayerKind::UpConv: return {layer.in_channels, layer.out_channels, 2, 2};
    case LayerKind::OutConv: return {layer.out_channels, layer.in_channels, 1, 1};
  }
  return {};
}

template <typename T>
ParameterStore<T> empty_model(const ModelConfig& config) {
  ParameterStore<T> store;
  for (const LayerSpec& layer : network_layout(config)) {
    store.add(layer.name + ".weight", layer.scope, weight_shape(layer));
    store.add(layer.name + ".bias", layer.scope, {layer.out_channels});
  }
  return store;
}

template <typename T>
ParameterStore<T> init_model(const ModelConfig& config) {
  ParameterStore<T> store;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const LayerSpec& layer : network_layout(config)) {
    double fan_in = layer.in_channels;  // upconv: each output pixel sees one tap per input channel
    double gain = 2.0;
    if (layer.kind == LayerKind::Conv) fan_in *= layer.kernel * layer.kernel;
    if (layer.kind == LayerKind::OutConv) gain = 1.0;
    const double stddev = std::sqrt(gain / fan_in);
    auto& w = store.add(layer.name + ".weight", layer.scope, weight_shape(layer));
    for (T& v : w.values) v = static_cast<T>(stddev * normal(rng));
    store.add(layer.name + ".bias", layer.scope, {layer.out_channels});
  }
  return store;
}

namespace net {

template <typename T>
void check_input(const ModelConfig& config, const Tensor<T>& input, std::string_view what) {
  const Shape& s = input.shape();
  if (s.n < 1 || s.c != 1 || s.h != config.input_size || s.w != config.input_size)
    throw DimensionError(std::string(what) + " must be (N,1," + std::to_string(config.input_size) +
                         "," + std::to_string(config.input_size) + "), got " + s.str());
}

template <typename T>
std::pair<FeaturePyramid<T>, LatentCode<T>> encode(const ModelConfig& config,
                                                   const ParameterStore<T>& params,
                                                   std::string_view prefix,
                                                   const Tensor<T>& input,
                                                   EncoderTrace<T>* trace) {
  FeaturePyramid<T> pyramid;
  if (trace) {
    trace->acts.assign(config.depth, {});
    trace->argmax.assign(config.depth, {});
  }
  Tensor<T> x = input;
  for (int level = 0; level < config.depth; ++level) {
    const int ch = config.level_channels(level);
    if (trace) trace->acts[level].push_back(x);
    for (int j = 0; j < config.convs_per_level; ++j) {
      const std::string name = conv_name(prefix, level, j);
      x = layers::conv2d(x, weight(params, name), bias(params, name), ch, config.kernel_size);
      layers::relu_inplace(x);
      if (trace) trace->acts[level].push_back(x);
    }
    Tensor<T> pooled = layers::maxpool2x2(x, trace ? &trace->argmax[level] : nullptr);
    pyramid.levels.push_back(std::move(x));
    x = std::move(pooled);
  }
  return {std::move(pyramid), LatentCode<T>{std::move(x)}};
}

template <typename T>
SegmentationMap<T> decode(const ModelConfig& config, const ParameterStore<T>& params,
                          std::string_view prefix, const LatentCode<T>& code,
                          const FeaturePyramid<T>& skips, DecoderTrace<T>* trace) {
  const Shape& cs = code.values.shape();
  if (cs.c != config.latent_channels() || cs.h != config.latent_size() ||
      cs.w != config.latent_size())
    throw DimensionError("latent code shape " + cs.str() + " does not match config");
  if (static_cast<int>(skips.levels.size()) != config.depth)
    throw DimensionError("feature pyramid has " + std::to_string(skips.levels.size()) +
                         " levels, config depth is " + std::to_string(config.depth));
  for (int level = 0; level < config.depth; ++level) {
    const Shape expected{cs.n, config.level_channels(level), config.level_size(level),
                         config.level_size(level)};
    if (skips.levels[level].shape() != expected)
      throw DimensionError("feature pyramid level " + std::to_string(level) + " is " +
                           skips.levels[level].shape().str() + ", expected " + expected.str());
  }

  if (trace) trace->levels.assign(config.depth, {});
  Tensor<T> x = code.values;
  for (int level = config.depth - 1; level >= 0; --level) {
    const int ch = config.level_channels(level);
    const std::string up = up_name(prefix, level);
    Tensor<T> upsampled = layers::upconv2x2(x, weight(params, up), bias(params, up), ch);
    Tensor<T> cat = layers::concat_channels(upsampled, skips.levels[level]);
    if (trace) {
      trace->levels[level].up_in = std::move(x);
      trace->levels[level].cat = cat;
    }
    x = std::move(cat);
    for (int j = 0; j < config.convs_per_level; ++j) {
      const std::string name = conv_name(prefix, level, j);
      x = layers::conv2d(x, weight(params, name), bias(params, name), ch, config.kernel_size);
      layers::relu_inplace(x);
      if (trace) trace->levels[level].acts.push_back(x);
    }
  }
  const std::string out = out_name(prefix);
  Tensor<T> probs = layers::conv2d(x, weight(params, out), bias(params, out),
                                   config.output_classes, 1);
  layers::sigmoid_inplace(probs);
  if (trace) trace->probs = probs;
  return probs;
}

template <typename T>
Tensor<T> decode_backward(const ModelConfig& config, const ParameterStore<T>& params,
                          std::string_view prefix, const DecoderTrace<T>& trace,
                          const Tensor<T>& dprobs, ParameterStore<T>& grads,
                          FeaturePyramid<T>* dskips) {
  if (dprobs.shape() != trace.probs.shape())
    throw DimensionError("decode_backward: gradient shape mismatch");
  Tensor<T> dz = dprobs;
  for (std::size_t i = 0; i < dz.size(); ++i) {
    const T p = trace.probs.data()[i];
    dz.data()[i] *= p * (T(1) - p);
  }
  const std::string out = out_name(prefix);
  Tensor<T> dx;
  layers::conv2d_backward(trace.levels[0].acts.back(), weight(params, out), config.output_classes,
                          1, dz, grads.values(out + ".weight"), grads.values(out + ".bias"), &dx);

  if (dskips) dskips->levels.assign(config.depth, {});
  for (int level = 0; level < config.depth; ++level) {
    const auto& lt = trace.levels[level];
    const int ch = config.level_channels(level);
    for (int j = config.convs_per_level - 1; j >= 0; --j) {
      layers::relu_backward_inplace(lt.acts[j], dx);
      const std::string name = conv_name(prefix, level, j);
      const Tensor<T>& in = j == 0 ? lt.cat : lt.acts[j - 1];
      Tensor<T> din;
      layers::conv2d_backward(in, weight(params, name), ch, config.kernel_size, dx,
                              grads.values(name + ".weight"), grads.values(name + ".bias"), &din);
      dx = std::move(din);
    }
    auto [dup, dskip] = layers::split_channels(dx, ch);
    if (dskips) dskips->levels[level] = std::move(dskip);
    const std::string up = up_name(prefix, level);
    Tensor<T> din;
    layers::upconv2x2_backward(lt.up_in, weight(params, up), ch, dup,
                               grads.values(up + ".weight"), grads.values(up + ".bias"), &din);
    dx = std::move(din);
  }
  return dx;
}

template <typename T>
void encode_backward(const ModelConfig& config, const ParameterStore<T>& params,
                     std::string_view prefix, const EncoderTrace<T>& trace,
                     const Tensor<T>& dcode, const FeaturePyramid<T>* dskips,
                     ParameterStore<T>& grads) {
  Tensor<T> dx = dcode;
  for (int level = config.depth - 1; level >= 0; --level) {
    const auto& acts = trace.acts[level];
    const int ch = config.level_channels(level);
    Tensor<T> dact = layers::maxpool2x2_backward(trace.argmax[level], dx, acts.back().shape());
    if (dskips) add_into(dact, dskips->levels[level]);
    for (int j = config.convs_per_level - 1; j >= 0; --j) {
      layers::relu_backward_inplace(acts[j + 1], dact);
      const std::string name = conv_name(prefix, level, j);
      const bool need_input_grad = level > 0 || j > 0;
      Tensor<T> din;
      layers::conv2d_backward(acts[j], weight(params, name), ch, config.kernel_size, dact,
                              grads.values(name + ".weight"), grads.values(name + ".bias"),
                              need_input_grad ? &din : nullptr);
      dact = std::move(din);
    }
    dx = std::move(dact);
  }
}

}  // namespace net

template <typename T>
std::pair<SegmentationMap<T>, FeaturePyramid<T>> unet_forward(const ModelConfig& config,
                                                              const ParameterStore<T>& params,
                                                              const Tensor<T>& image) {
  net::check_input(config, image, "image");
  auto [skips, code] = net::encode<T>(config, params, prefix::kUnetEncoder, image, nullptr);
  auto seg = net::decode<T>(config, params, prefix::kUnetDecoder, code, skips, nullptr);
  return {std::move(seg), std::move(skips)};
}

template <typename T>
LatentCode<T> cae_encode(const ModelConfig& config, const ParameterStore<T>& params,
                         const Tensor<T>& mask) {
  net::check_input(config, mask, "mask");
  return net::encode<T>(config, params, prefix::kCaeEncoder, mask, nullptr).second;
}

template <typename T>
SegmentationMap<T> decode_with_skips(const ModelConfig& config, const ParameterStore<T>& params,
                                     const LatentCode<T>& code, const FeaturePyramid<T>& skips) {
  return net::decode<T>(config, params, prefix::kCaeDecoder, code, skips, nullptr);
}

template <typename T>
LatentCode<T> imitating_encode(const ModelConfig& config, const ParameterStore<T>& params,
                               const Tensor<T>& image) {
  net::check_input(config, image, "image");
  return net::encode<T>(config, params, prefix::kImitatingEncoder, image, nullptr).second;
}

template <typename T>
InferenceResult<T> ie2d_infer(const ModelConfig& config, const ParameterStore<T>& params,
                              const Tensor<T>& image) {
  auto [unet_seg, skips] = unet_forward(config, params, image);
  const LatentCode<T> code = imitating_encode(config, params, image);
  return {decode_with_skips(config, params, code, skips), std::move(unet_seg)};
}

#define IE2D_INSTANTIATE(T)                                                                     \
  template ParameterStore<T> empty_model<T>(const ModelConfig&);                                \
  template ParameterStore<T> init_model<T>(const ModelConfig&);                                 \
  template std::pair<SegmentationMap<T>, FeaturePyramid<T>> unet_forward(                       \
      const ModelConfig&, const ParameterStore<T>&, const Tensor<T>&);                          \
  template LatentCode<T> cae_encode(const ModelConfig&, const ParameterStore<T>&,               \
                                    const Tensor<T>&);                                          \
  template SegmentationMap<T> decode_with_skips(const ModelConfig&, const ParameterStore<T>&,   \
                                                const LatentCode<T>&, const FeaturePyramid<T>&); \
  template LatentCode<T> imitating_encode(const ModelConfig&, const ParameterStore<T>&,         \
                                          const Tensor<T>&);                                    \
  template InferenceResult<T> ie2d_infer(const ModelConfig&, const ParameterStore<T>&,          \
                                         const Tensor<T>&);                                     \
  template void net::check_input(const ModelConfig&, const Tensor<T>&, std::string_view);       \
  template std::pair<FeaturePyramid<T>, LatentCode<T>> net::encode(                             \
      const ModelConfig&, const ParameterStore<T>&, std::string_view, const Tensor<T>&,         \
      net::EncoderTrace<T>*);                                                                   \
  template SegmentationMap<T> net::decode(const ModelConfig&, const ParameterStore<T>&,         \
                                          std::string_view, const LatentCode<T>&,               \
                                          const FeaturePyramid<T>&, net::DecoderTrace<T>*);     \
  template Tensor<T> net::decode_backward(const ModelConfig&, const ParameterStore<T>&,         \
                                          std::string_view, const net::DecoderTrace<T>&,        \
                                          const Tensor<T>&, ParameterStore<T>&,                 \
                                          FeaturePyramid<T>*);                                  \
  template void net::encode_backward(const ModelConfig&, const ParameterStore<T>&,              \
                                     std::string_view, const net::EncoderTrace<T>&,             \
                                     const Tensor<T>&, const FeaturePyramid<T>*,                \
                                     ParameterStore<T>&);

IE2D_INSTANTIATE(float)
IE2D_INSTANTIATE(double)
#undef IE2D_INSTANTIATE

}  // namespace ie2d
