#include "ie2d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ie2d/errors.hpp"

namespace ie2d {
namespace {

void check_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw DimensionError(std::string(op) + ": size mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
}

}  // namespace

std::string_view loss_name(LossName name) {
  switch (name) {
    case LossName::UnetOut: return "UNET_OUT";
    case LossName::CaeOut: return "CAE_OUT";
    case LossName::Ie2dOut: return "IE2D_OUT";
    case LossName::Imitation: return "IMITATION";
  }
  return "?";
}

LossName parse_loss_name(std::string_view name) {
  for (LossName l : kAllLosses)
    if (loss_name(l) == name) return l;
  throw ConfigError("unknown loss name '" + std::string(name) + "'");
}

bool LossSpec::updates(Scope scope) const {
  return std::find(updatable_scopes.begin(), updatable_scopes.end(), scope) !=
         updatable_scopes.end();
}

LossSpec loss_spec(LossName name) {
  switch (name) {
    case LossName::UnetOut: return {name, {Scope::Unet}};
    case LossName::CaeOut: return {name, {Scope::CaeEncoder, Scope::CaeDecoder}};
    case LossName::Ie2dOut: return {name, {Scope::ImitatingEncoder, Scope::CaeDecoder}};
    case LossName::Imitation: return {name, {Scope::ImitatingEncoder}};
  }
  throw ConfigError("unknown loss");
}

template <typename T>
double dice_coefficient(std::span<const T> pred, std::span<const T> target, double smooth) {
  check_same_size(pred.size(), target.size(), "dice_coefficient");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += static_cast<double>(pred[i]) * target[i];
    total += static_cast<double>(pred[i]) + target[i];
  }
  return (2.0 * inter + smooth) / (total + smooth);
}

template <typename T>
double dice_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad,
                 double smooth) {
  check_same_size(pred.size(), target.size(), "dice_loss");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += static_cast<double>(pred[i]) * target[i];
    total += static_cast<double>(pred[i]) + target[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = total + smooth;
  if (!grad.empty()) {
    check_same_size(grad.size(), pred.size(), "dice_loss gradient");
    // d(num/den)/dp_i = (2 t_i den - num) / den^2
    const double inv = 1.0 / (den * den);
    for (std::size_t i = 0; i < pred.size(); ++i)
      grad[i] = static_cast<T>(-(2.0 * target[i] * den - num) * inv);
  }
  return 1.0 - num / den;
}

template <typename T>
double cross_entropy_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad,
                          double clamp) {
  check_same_size(pred.size(), target.size(), "cross_entropy_loss");
  if (!grad.empty()) check_same_size(grad.size(), pred.size(), "cross_entropy_loss gradient");
  if (pred.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, clamp, 1.0 - clamp);
    const double t = target[i];
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    if (!grad.empty()) {
      const bool clamped = raw < clamp || raw > 1.0 - clamp;
      grad[i] = clamped ? T(0) : static_cast<T>((p - t) / (p * (1.0 - p)) * inv_n);
    }
  }
  return sum * inv_n;
}

template <typename T>
double imitation_loss(std::span<const T> z_imit, std::span<const T> z_cae, std::span<T> grad,
                      ImitationOptions options) {
  check_same_size(z_imit.size(), z_cae.size(), "imitation_loss");
  if (!grad.empty()) check_same_size(grad.size(), z_imit.size(), "imitation_loss gradient");
  double sq = 0.0;
  for (std::size_t i = 0; i < z_imit.size(); ++i) {
    const double d = static_cast<double>(z_imit[i]) - z_cae[i];
    sq += d * d;
  }
  const double scale = options.normalize && !z_imit.empty() ? 1.0 / z_imit.size() : 1.0;
  const double norm = std::sqrt(sq);
  if (!grad.empty()) {
    // squared: 2d; plain: d/||d|| (0 at the origin)
    const double factor = options.squared ? 2.0 * scale : (norm > 0.0 ? scale / norm : 0.0);
    for (std::size_t i = 0; i < z_imit.size(); ++i)
      grad[i] = static_cast<T>(factor * (static_cast<double>(z_imit[i]) - z_cae[i]));
  }
  return (options.squared ? sq : norm) * scale;
}

template <typename T>
double segmentation_loss(SegLossKind kind, const Tensor<T>& pred, const Tensor<T>& target,
                         Tensor<T>* grad) {
  if (pred.shape() != target.shape())
    throw DimensionError("segmentation_loss: prediction " + pred.shape().str() +
                         " vs target " + target.shape().str());
  if (grad) *grad = Tensor<T>(pred.shape());
  const int n = pred.n();
  double total = 0.0;
  for (int s = 0; s < n; ++s) {
    std::span<T> g = grad ? grad->sample(s) : std::span<T>{};
    total += kind == SegLossKind::Dice ? dice_loss(pred.sample(s), target.sample(s), g)
                                       : cross_entropy_loss(pred.sample(s), target.sample(s), g);
  }
  if (grad)
    for (T& v : grad->values()) v /= static_cast<T>(n);
  return total / n;
}

template <typename T>
double imitation_loss(const Tensor<T>& z_imit, const Tensor<T>& z_cae, Tensor<T>* grad,
                      ImitationOptions options) {
  if (z_imit.shape() != z_cae.shape())
    throw DimensionError("imitation_loss: code shapes " + z_imit.shape().str() + " vs " +
                         z_cae.shape().str());
  if (grad) *grad = Tensor<T>(z_imit.shape());
  const int n = z_imit.n();
  double total = 0.0;
  for (int s = 0; s < n; ++s) {
    std::span<T> g = grad ? grad->sample(s) : std::span<T>{};
    total += imitation_loss(z_imit.sample(s), z_cae.sample(s), g, options);
  }
  if (grad)
    for (T& v : grad->values()) v /= static_cast<T>(n);
  return total / n;
}

#define IE2D_INSTANTIATE(T)                                                                        \
  template double dice_coefficient(std::span<const T>, std::span<const T>, double);                \
  template double dice_loss(std::span<const T>, std::span<const T>, std::span<T>, double);         \
  template double cross_entropy_loss(std::span<const T>, std::span<const T>, std::span<T>, double); \
  template double imitation_loss(std::span<const T>, std::span<const T>, std::span<T>,             \
                                 ImitationOptions);                                                \
  template double segmentation_loss(SegLossKind, const Tensor<T>&, const Tensor<T>&, Tensor<T>*);  \
  template double imitation_loss(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, ImitationOptions);

IE2D_INSTANTIATE(float)
IE2D_INSTANTIATE(double)
#undef IE2D_INSTANTIATE

}  // namespace ie2d
