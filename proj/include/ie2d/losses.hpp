#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ie2d/parameter_store.hpp"
#include "ie2d/tensor.hpp"

namespace ie2d {

enum class LossName { UnetOut, CaeOut, Ie2dOut, Imitation };

inline constexpr LossName kAllLosses[] = {LossName::UnetOut, LossName::CaeOut, LossName::Ie2dOut,
                                          LossName::Imitation};

std::string_view loss_name(LossName name);  // "UNET_OUT", "CAE_OUT", "IE2D_OUT", "IMITATION"
LossName parse_loss_name(std::string_view name);  // throws ConfigError

// A training loss together with the only scopes its minimization may touch.
struct LossSpec {
  LossName name;
  std::vector<Scope> updatable_scopes;
  double value = 0.0;

  bool updates(Scope scope) const;
};

// UNET_OUT -> {UNET}; CAE_OUT -> {CAE_ENCODER, CAE_DECODER};
// IE2D_OUT -> {IMITATING_ENCODER, CAE_DECODER}; IMITATION -> {IMITATING_ENCODER}.
LossSpec loss_spec(LossName name);

// Smoothing for reported DSC values: small enough that binary inputs give the
// set-based DSC to within 1e-6.
inline constexpr double kMetricSmooth = 1e-6;
// Soft-Dice smoothing used by the training losses.
inline constexpr double kLossSmooth = 1.0;
inline constexpr double kCrossEntropyClamp = 1e-7;

enum class SegLossKind { Dice, CrossEntropy };

struct ImitationOptions {
  bool squared = false;    // ||d||^2 instead of ||d||
  bool normalize = false;  // divide by the latent length
};

// (2*sum(p*t) + s) / (sum(p) + sum(t) + s)
template <typename T>
double dice_coefficient(std::span<const T> pred, std::span<const T> target,
                        double smooth = kMetricSmooth);

// 1 - dice. When `grad` is non-empty it receives d(loss)/d(pred).
template <typename T>
double dice_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {},
                 double smooth = kLossSmooth);

// Mean pixelwise binary cross-entropy with pred clamped to [eps, 1 - eps].
template <typename T>
double cross_entropy_loss(std::span<const T> pred, std::span<const T> target,
                          std::span<T> grad = {}, double clamp = kCrossEntropyClamp);

// Euclidean distance between flattened codes; z_cae is a constant target.
// The gradient at zero distance is defined as 0.
template <typename T>
double imitation_loss(std::span<const T> z_imit, std::span<const T> z_cae, std::span<T> grad = {},
                      ImitationOptions options = {});

// Batch forms: per-sample losses averaged over N. `grad` (optional) is resized
// to the input shape and receives d(mean loss)/d(input).
template <typename T>
double segmentation_loss(SegLossKind kind, const Tensor<T>& pred, const Tensor<T>& target,
                         Tensor<T>* grad);

template <typename T>
double imitation_loss(const Tensor<T>& z_imit, const Tensor<T>& z_cae, Tensor<T>* grad,
                      ImitationOptions options = {});

}  // namespace ie2d
