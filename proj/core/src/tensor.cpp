#include "parkvision/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "parkvision/errors.hpp"

namespace pv {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw DimensionError(fmt::format("tensor shape {} has zero-length axis {}", shape_to_string(shape), i));
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError(fmt::format("tensor shape {} needs {} values, got {}", shape_to_string(shape_),
                                     shape_numel(shape_), data_.size()));
  }
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError(fmt::format("axis {} out of range for shape {}", axis, shape_to_string(shape_)));
  }
  return shape_[axis];
}

template <typename T>
void BasicTensor<T>::check_index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  if (shape_.size() != 4) throw DimensionError(fmt::format("at(n,c,h,w) needs a 4-D tensor, shape is {}", shape_to_string(shape_)));
  if (n >= shape_[0] || c >= shape_[1] || h >= shape_[2] || w >= shape_[3]) {
    throw DimensionError(fmt::format("index ({},{},{},{}) out of range for shape {}", n, c, h, w, shape_to_string(shape_)));
  }
}

template <typename T>
T& BasicTensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  check_index(n, c, h, w);
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
const T& BasicTensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  check_index(n, c, h, w);
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
  return BasicTensor(std::move(shape), std::move(data_));
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace pv
