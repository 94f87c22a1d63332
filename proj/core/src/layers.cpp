#include "parkvision/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "parkvision/errors.hpp"

namespace pv {

template <typename T>
BasicLayerParams<T>::BasicLayerParams(BasicTensor<T> w, BasicTensor<T> b)
    : weights(std::move(w)),
      bias(std::move(b)),
      grad_weights(weights.shape()),
      grad_bias(bias.shape()) {}

template <typename T>
void BasicLayerParams<T>::zero_grad() {
  grad_weights.fill(T{0});
  grad_bias.fill(T{0});
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ValidationError("convolution stride must be positive");
  if (in + 2 * pad < kernel) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (stride == 0 || window == 0) throw ValidationError("pool window and stride must be positive");
  if (in < window) return 0;
  return (in - window) / stride + 1;
}

namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw DimensionError(fmt::format("{} expects rank {} tensor, got shape {}", what, rank, shape_to_string(shape)));
  }
}

struct ConvDims {
  std::size_t n, c, h, w, k, kh, kw, oh, ow;
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicLayerParams<T>& params, Conv2dGeometry geom) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(params.weights.shape(), 4, "conv2d kernel");
  const auto& is = input.shape();
  const auto& ws = params.weights.shape();
  if (is[1] != ws[1]) {
    throw DimensionError(fmt::format("conv2d channel mismatch: input axis 1 (C) is {} but kernel axis 1 is {}",
                                     is[1], ws[1]));
  }
  if (params.bias.size() != ws[0]) {
    throw DimensionError(fmt::format("conv2d bias has {} values for {} output channels (kernel axis 0)",
                                     params.bias.size(), ws[0]));
  }
  if (is[2] + 2 * geom.pad < ws[2]) {
    throw DimensionError(fmt::format("conv2d height: input axis 2 ({}) + 2*pad ({}) smaller than kernel axis 2 ({})",
                                     is[2], geom.pad, ws[2]));
  }
  if (is[3] + 2 * geom.pad < ws[3]) {
    throw DimensionError(fmt::format("conv2d width: input axis 3 ({}) + 2*pad ({}) smaller than kernel axis 3 ({})",
                                     is[3], geom.pad, ws[3]));
  }
  ConvDims d{is[0], is[1], is[2], is[3], ws[0], ws[2], ws[3], 0, 0};
  d.oh = conv_output_extent(d.h, d.kh, geom.stride, geom.pad);
  d.ow = conv_output_extent(d.w, d.kw, geom.stride, geom.pad);
  return d;
}

// Range of output columns ox whose input column ox*stride - pad + offset lies in [0, w).
struct ValidRange {
  std::size_t begin, end;
};

ValidRange valid_outputs(std::size_t out, std::size_t in, std::size_t stride, std::size_t pad, std::size_t offset) {
  // ix = ox*stride + offset - pad >= 0  <=>  ox >= ceil((pad - offset)/stride)
  std::size_t begin = 0;
  if (pad > offset) begin = (pad - offset + stride - 1) / stride;
  // ix < in  <=>  ox*stride < in + pad - offset
  std::size_t end = 0;
  if (in + pad > offset) end = std::min(out, (in + pad - offset + stride - 1) / stride);
  if (begin > end) begin = end;
  return {begin, end};
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicLayerParams<T>& params, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input, params, geom);
  BasicTensor<T> out({d.n, d.k, d.oh, d.ow});
  const T* in = input.raw();
  const T* wt = params.weights.raw();
  T* o = out.raw();
  const std::size_t s = geom.stride;

  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t k = 0; k < d.k; ++k) {
      T* oplane = o + (n * d.k + k) * d.oh * d.ow;
      std::fill(oplane, oplane + d.oh * d.ow, params.bias[k]);
      for (std::size_t c = 0; c < d.c; ++c) {
        const T* iplane = in + (n * d.c + c) * d.h * d.w;
        const T* kplane = wt + (k * d.c + c) * d.kh * d.kw;
        for (std::size_t ki = 0; ki < d.kh; ++ki) {
          const ValidRange rows = valid_outputs(d.oh, d.h, s, geom.pad, ki);
          for (std::size_t kj = 0; kj < d.kw; ++kj) {
            const T wv = kplane[ki * d.kw + kj];
            const ValidRange cols = valid_outputs(d.ow, d.w, s, geom.pad, kj);
            if (cols.begin == cols.end) continue;
            const std::size_t x0 = cols.begin * s + kj - geom.pad;
            const std::size_t count = cols.end - cols.begin;
            for (std::size_t oy = rows.begin; oy < rows.end; ++oy) {
              const T* irow = iplane + (oy * s + ki - geom.pad) * d.w + x0;
              T* orow = oplane + oy * d.ow + cols.begin;
              if (s == 1) {
                for (std::size_t t = 0; t < count; ++t) orow[t] += wv * irow[t];
              } else {
                for (std::size_t t = 0; t < count; ++t) orow[t] += wv * irow[t * s];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& input, BasicLayerParams<T>& params,
                               const BasicTensor<T>& grad_output, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input, params, geom);
  const Shape expected{d.n, d.k, d.oh, d.ow};
  if (grad_output.shape() != expected) {
    throw DimensionError(fmt::format("conv2d_backward grad_output shape {} does not match forward output {}",
                                     shape_to_string(grad_output.shape()), shape_to_string(expected)));
  }
  if (params.grad_weights.shape() != params.weights.shape() || params.grad_bias.shape() != params.bias.shape()) {
    throw DimensionError("conv2d_backward gradient buffers do not match parameter shapes");
  }

  BasicTensor<T> grad_in(input.shape());
  const T* in = input.raw();
  const T* wt = params.weights.raw();
  const T* go = grad_output.raw();
  T* gw = params.grad_weights.raw();
  T* gi = grad_in.raw();
  const std::size_t s = geom.stride;

  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t k = 0; k < d.k; ++k) {
      const T* gplane = go + (n * d.k + k) * d.oh * d.ow;
      T bias_sum{0};
      for (std::size_t i = 0; i < d.oh * d.ow; ++i) bias_sum += gplane[i];
      params.grad_bias[k] += bias_sum;

      for (std::size_t c = 0; c < d.c; ++c) {
        const T* iplane = in + (n * d.c + c) * d.h * d.w;
        T* giplane = gi + (n * d.c + c) * d.h * d.w;
        const T* kplane = wt + (k * d.c + c) * d.kh * d.kw;
        T* gkplane = gw + (k * d.c + c) * d.kh * d.kw;
        for (std::size_t ki = 0; ki < d.kh; ++ki) {
          const ValidRange rows = valid_outputs(d.oh, d.h, s, geom.pad, ki);
          for (std::size_t kj = 0; kj < d.kw; ++kj) {
            const T wv = kplane[ki * d.kw + kj];
            const ValidRange cols = valid_outputs(d.ow, d.w, s, geom.pad, kj);
            T acc{0};
            if (cols.begin == cols.end) continue;
            const std::size_t x0 = cols.begin * s + kj - geom.pad;
            const std::size_t count = cols.end - cols.begin;
            for (std::size_t oy = rows.begin; oy < rows.end; ++oy) {
              const std::size_t base = (oy * s + ki - geom.pad) * d.w + x0;
              const T* irow = iplane + base;
              T* girow = giplane + base;
              const T* grow = gplane + oy * d.ow + cols.begin;
              for (std::size_t t = 0; t < count; ++t) {
                acc += grow[t] * irow[t * s];
                girow[t * s] += wv * grow[t];
              }
            }
            gkplane[ki * d.kw + kj] += acc;
          }
        }
      }
    }
  }
  return grad_in;
}

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank(input.shape(), 4, "maxpool2d input");
  const auto& is = input.shape();
  if (window == 0 || stride == 0) throw ValidationError("maxpool2d window and stride must be positive");
  if (window > is[2] || window > is[3]) {
    throw DimensionError(fmt::format("maxpool2d window {} larger than input spatial size {}x{} (axes 2,3)", window,
                                     is[2], is[3]));
  }
  const std::size_t n = is[0], c = is[1], h = is[2], w = is[3];
  const std::size_t oh = pool_output_extent(h, window, stride);
  const std::size_t ow = pool_output_extent(w, window, stride);

  PoolResult<T> result{BasicTensor<T>({n, c, oh, ow}), PoolIndex{is, {n, c, oh, ow}, {}}};
  result.index.argmax.resize(result.output.size());
  const T* in = input.raw();
  T* out = result.output.raw();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t plane_base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = plane_base + oy * stride * w + ox * stride;
        T best_val = in[best];
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = plane_base + (oy * stride + i) * w + ox * stride + j;
            if (in[idx] > best_val) {
              best_val = in[idx];
              best = idx;
            }
          }
        }
        out[o] = best_val;
        result.index.argmax[o] = best;
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const PoolIndex& index, const BasicTensor<T>& grad_output,
                                  const Shape& input_shape) {
  if (index.input_shape != input_shape) {
    throw DimensionError(fmt::format("maxpool2d_backward: argmax was recorded for input {} but input shape is {}",
                                     shape_to_string(index.input_shape), shape_to_string(input_shape)));
  }
  if (index.output_shape != grad_output.shape() || index.argmax.size() != grad_output.size()) {
    throw DimensionError(fmt::format("maxpool2d_backward: grad_output shape {} does not match pooled output {}",
                                     shape_to_string(grad_output.shape()), shape_to_string(index.output_shape)));
  }
  BasicTensor<T> grad_in(input_shape);
  const std::size_t limit = grad_in.size();
  for (std::size_t o = 0; o < grad_output.size(); ++o) {
    const std::size_t target = index.argmax[o];
    if (target >= limit) throw DimensionError("maxpool2d_backward: argmax index outside input");
    grad_in[target] += grad_output[o];
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  if (input.shape() != grad_output.shape()) {
    throw DimensionError(fmt::format("relu_backward: input {} vs grad_output {}", shape_to_string(input.shape()),
                                     shape_to_string(grad_output.shape())));
  }
  BasicTensor<T> grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(input[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

namespace {

template <typename T>
void linear_dims(const BasicTensor<T>& input, const BasicLayerParams<T>& params, std::size_t& n, std::size_t& d,
                 std::size_t& m) {
  require_rank(input.shape(), 2, "linear input");
  require_rank(params.weights.shape(), 2, "linear weights");
  n = input.dim(0);
  d = input.dim(1);
  if (params.weights.dim(0) != d) {
    throw DimensionError(fmt::format("linear: input axis 1 ({}) does not match weights axis 0 ({})", d,
                                     params.weights.dim(0)));
  }
  m = params.weights.dim(1);
  if (params.bias.size() != m) {
    throw DimensionError(fmt::format("linear: bias has {} values, weights axis 1 is {}", params.bias.size(), m));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicLayerParams<T>& params) {
  std::size_t n, d, m;
  linear_dims(input, params, n, d, m);
  BasicTensor<T> out({n, m});
  const T* x = input.raw();
  const T* w = params.weights.raw();
  T* y = out.raw();
  for (std::size_t r = 0; r < n; ++r) {
    T* yr = y + r * m;
    for (std::size_t j = 0; j < m; ++j) yr[j] = params.bias[j];
    for (std::size_t i = 0; i < d; ++i) {
      const T xv = x[r * d + i];
      const T* wr = w + i * m;
      for (std::size_t j = 0; j < m; ++j) yr[j] += xv * wr[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& input, BasicLayerParams<T>& params,
                               const BasicTensor<T>& grad_output) {
  std::size_t n, d, m;
  linear_dims(input, params, n, d, m);
  if (grad_output.shape() != Shape{n, m}) {
    throw DimensionError(fmt::format("linear_backward: grad_output {} expected [{},{}]",
                                     shape_to_string(grad_output.shape()), n, m));
  }
  BasicTensor<T> grad_in({n, d});
  const T* x = input.raw();
  const T* w = params.weights.raw();
  const T* g = grad_output.raw();
  T* gw = params.grad_weights.raw();
  T* gx = grad_in.raw();
  for (std::size_t r = 0; r < n; ++r) {
    const T* gr = g + r * m;
    for (std::size_t j = 0; j < m; ++j) params.grad_bias[j] += gr[j];
    for (std::size_t i = 0; i < d; ++i) {
      const T xv = x[r * d + i];
      const T* wr = w + i * m;
      T* gwr = gw + i * m;
      T acc{0};
      for (std::size_t j = 0; j < m; ++j) {
        gwr[j] += xv * gr[j];
        acc += gr[j] * wr[j];
      }
      gx[r * d + i] = acc;
    }
  }
  return grad_in;
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  const std::size_t n = logits.dim(0);
  if (logits.dim(1) != 2) {
    throw DimensionError(fmt::format("softmax_cross_entropy expects 2 classes on axis 1, got {}", logits.dim(1)));
  }
  if (labels.size() != n) {
    throw ValidationError(fmt::format("softmax_cross_entropy: {} labels for {} rows", labels.size(), n));
  }
  SoftmaxCrossEntropy<T> r{0.0, BasicTensor<T>({n, 2}), BasicTensor<T>({n, 2})};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label != 0 && label != 1) {
      throw ValidationError(fmt::format("label {} at row {} is not 0 or 1", label, i));
    }
    const double a = logits[2 * i];
    const double b = logits[2 * i + 1];
    const double mx = std::max(a, b);
    const double ea = std::exp(a - mx);
    const double eb = std::exp(b - mx);
    const double z = ea + eb;
    const double pa = ea / z;
    const double pb = eb / z;
    const double log_true = (label == 0 ? a : b) - mx - std::log(z);
    total -= log_true;
    r.probs[2 * i] = static_cast<T>(pa);
    r.probs[2 * i + 1] = static_cast<T>(pb);
    r.grad_logits[2 * i] = static_cast<T>((pa - (label == 0 ? 1.0 : 0.0)) / static_cast<double>(n));
    r.grad_logits[2 * i + 1] = static_cast<T>((pb - (label == 1 ? 1.0 : 0.0)) / static_cast<double>(n));
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename T>
void sgd_update(BasicLayerParams<T>& params, double lr, double weight_decay) {
  if (params.frozen) {
    params.zero_grad();
    return;
  }
  if (!params.grad_weights.all_finite() || !params.grad_bias.all_finite()) {
    throw TrainingError("non-finite gradient in sgd_update (training diverged)", 0);
  }
  const T step = static_cast<T>(lr);
  const T decay = static_cast<T>(weight_decay);
  auto w = params.weights.data();
  auto gw = params.grad_weights.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * (gw[i] + decay * w[i]);
  auto b = params.bias.data();
  auto gb = params.grad_bias.data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
  params.zero_grad();
}

#define PV_INSTANTIATE_LAYERS(T)                                                                             \
  template struct BasicLayerParams<T>;                                                                       \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicLayerParams<T>&, Conv2dGeometry);         \
  template BasicTensor<T> conv2d_backward(const BasicTensor<T>&, BasicLayerParams<T>&, const BasicTensor<T>&, \
                                          Conv2dGeometry);                                                   \
  template PoolResult<T> maxpool2d(const BasicTensor<T>&, std::size_t, std::size_t);                         \
  template BasicTensor<T> maxpool2d_backward(const PoolIndex&, const BasicTensor<T>&, const Shape&);         \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicLayerParams<T>&);                         \
  template BasicTensor<T> linear_backward(const BasicTensor<T>&, BasicLayerParams<T>&, const BasicTensor<T>&); \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);        \
  template void sgd_update(BasicLayerParams<T>&, double, double);

PV_INSTANTIATE_LAYERS(float)
PV_INSTANTIATE_LAYERS(double)

#undef PV_INSTANTIATE_LAYERS

}  // namespace pv
