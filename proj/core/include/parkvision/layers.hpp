#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "parkvision/tensor.hpp"

namespace pv {

// Learned parameters of one layer together with their accumulated gradients.
// Gradients accumulate across backward calls and are cleared by sgd_update.
template <typename T>
struct BasicLayerParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
  BasicTensor<T> grad_weights;
  BasicTensor<T> grad_bias;
  bool frozen = false;

  BasicLayerParams() = default;
  BasicLayerParams(BasicTensor<T> w, BasicTensor<T> b);

  void zero_grad();
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
};

using LayerParams = BasicLayerParams<float>;
using LayerParamsD = BasicLayerParams<double>;

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// Winning input positions of a max-pool forward pass, used to route gradients.
struct PoolIndex {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  PoolIndex index;
};

template <typename T>
struct SoftmaxCrossEntropy {
  double loss = 0.0;
  BasicTensor<T> grad_logits;
  BasicTensor<T> probs;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride);

// input [N,C,H,W], weights [K,C,kh,kw], bias [K] -> [N,K,H',W'] with zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicLayerParams<T>& params, Conv2dGeometry geom);

// Accumulates into params.grad_weights / grad_bias and returns dL/dinput.
template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& input, BasicLayerParams<T>& params,
                               const BasicTensor<T>& grad_output, Conv2dGeometry geom);

// Ties resolve to the first position in row-major scan order of the window.
template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
BasicTensor<T> maxpool2d_backward(const PoolIndex& index, const BasicTensor<T>& grad_output,
                                  const Shape& input_shape);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Subgradient at exactly zero is zero.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

// input [N,D], weights [D,M], bias [M] -> [N,M].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicLayerParams<T>& params);

template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& input, BasicLayerParams<T>& params,
                               const BasicTensor<T>& grad_output);

// Two-class softmax with mean cross-entropy over the batch. Labels are 0 or 1.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

// w <- w - lr * (grad + weight_decay * w); bias without decay. Frozen params are
// left untouched. Gradients are zeroed in both cases.
template <typename T>
void sgd_update(BasicLayerParams<T>& params, double lr, double weight_decay);

}  // namespace pv
