#include "ecdepth/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ecdepth {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail(ErrorCategory::shape, "non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(numel(shape_)), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != static_cast<int64_t>(data_.size()))
    fail(ErrorCategory::shape,
         "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) fail(ErrorCategory::shape, "item() on non-scalar tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (const T& v : data_)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> strides(shape.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    strides[static_cast<size_t>(i)] = acc;
    acc *= shape[static_cast<size_t>(i)];
  }
  return strides;
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op_name) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    int da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      fail(ErrorCategory::shape, std::string(op_name) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  auto strides = row_major_strides(in);
  std::vector<int64_t> result(out.size(), 0);
  for (size_t i = 0; i < out.size(); ++i) {
    size_t oi = out.size() - 1 - i;
    if (i < in.size()) {
      size_t ii = in.size() - 1 - i;
      result[oi] = (in[ii] == 1 && out[oi] != 1) ? 0 : strides[ii];
    }
  }
  return result;
}

const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::data: return "data";
    case ErrorCategory::runtime: return "runtime";
  }
  return "runtime";
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ecdepth
