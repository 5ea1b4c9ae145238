#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ie2d/tensor.hpp"

// Forward and backward kernels for the handful of layer types the networks use.
// Backward functions accumulate (+=) into parameter gradients.
namespace ie2d::layers {

// Stride-1 convolution with size-preserving padding: (k-1)/2 rows/cols before,
// the remainder after (4 before / 5 after for k = 10).
// weight layout [cout][cin][k][k], bias [cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int cout,
                 int k);

// `din` may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, int cout, int k,
                     const Tensor<T>& dout, std::span<T> dweight, std::span<T> dbias,
                     Tensor<T>* din);

// 2x2 transposed convolution with stride 2. weight layout [cin][cout][2][2].
template <typename T>
Tensor<T> upconv2x2(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int cout);

template <typename T>
void upconv2x2_backward(const Tensor<T>& in, std::span<const T> weight, int cout,
                        const Tensor<T>& dout, std::span<T> dweight, std::span<T> dbias,
                        Tensor<T>* din);

// 2x2 max-pooling, stride 2. `argmax` (optional) receives the winning
// position (0..3, row-major within the window; first maximum wins ties).
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& in, std::vector<std::uint8_t>* argmax);

template <typename T>
Tensor<T> maxpool2x2_backward(const std::vector<std::uint8_t>& argmax, const Tensor<T>& dout,
                              const Shape& in_shape);

template <typename T>
void relu_inplace(Tensor<T>& t);

// grad *= (out > 0), where out is the ReLU output.
template <typename T>
void relu_backward_inplace(const Tensor<T>& out, Tensor<T>& grad);

template <typename T>
void sigmoid_inplace(Tensor<T>& t);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Splits after the first `first_channels` channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, int first_channels);

}  // namespace ie2d::layers
