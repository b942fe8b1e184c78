#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecdepth/error.hpp"

namespace ecdepth {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

// Dense row-major array of reals. T is float in the training path and double
// everywhere verification happens.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  // Value of the single element of a {1}-shaped tensor.
  T item() const;

  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Row-major strides; broadcast dims (size 1 stretched to the output) get
// stride 0 so one index walk serves both operands.
std::vector<int64_t> row_major_strides(const Shape& shape);
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op_name);
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ecdepth
