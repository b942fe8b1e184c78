#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecdepth/tensor.hpp"

namespace ecdepth {

// Primitive vocabulary of the reverse-mode engine. Every member has an
// adjoint rule in Tape::backward; the gradient test suite enumerates them.
enum class Op {
  leaf,
  constant,
  // elementwise unary
  neg,
  abs,
  log,
  exp,
  sqrt,
  square,
  sin,
  cos,
  sigmoid,
  elu,
  clamp,  // attrs: lo, hi. Gradient passes on the closed interval [lo, hi].
  // elementwise binary with numpy-style broadcasting
  add,
  sub,
  mul,
  div,
  min2,  // ties propagate to the first operand
  max2,  // ties propagate to the first operand
  // reductions over a set of axes
  sum,
  mean,
  // shape
  reshape,
  concat,
  slice,
  broadcast_to,
  upsample_nearest2x,
  resize_bilinear,  // half-pixel mapping, edge clamp
  // neural
  conv2d,  // inputs: x NCHW, w [Co,Ci,Kh,Kw], b [Co]; attrs: stride, pad
  avg_pool3x3_reflect,
  channel_dropout,  // attrs: keep probability, seed; inverted scaling
  // sampling
  grid_sample,    // inputs: image NCHW, grid [N,2,H,W] in pixel coords
  grid_in_bounds, // input: grid; 0/1 mask, no gradient
  // control
  detach,
  cmp,  // attrs: mode (lt/le/gt/ge) against a constant; 0/1 output, no gradient
};

const char* op_name(Op op);

enum class CmpMode { lt, le, gt, ge };

struct OpAttrs {
  double a = 0.0;             // clamp lo / cmp threshold / dropout keep prob
  double b = 0.0;             // clamp hi
  std::vector<int> axes;      // reductions
  bool keepdims = false;      // reductions
  Shape shape;                // reshape / broadcast_to targets
  std::vector<int> starts;    // slice
  std::vector<int> sizes;     // slice
  int axis = 0;               // concat
  int i0 = 0, i1 = 0;         // conv stride/pad; resize target H/W
  uint64_t seed = 0;          // channel_dropout
  CmpMode cmp_mode = CmpMode::lt;
};

template <typename T>
class Tape;

// Lightweight handle to a tape node. Arithmetic on Vars appends nodes.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
};

// Reverse-mode tape over dense arrays. Build the graph once (shapes are
// inferred and checked at build time), bind leaves, evaluate, backward.
// Same graph + same leaf values replays bit-identically.
template <typename T>
class Tape {
 public:
  struct Node {
    Op op;
    std::vector<int> inputs;
    OpAttrs attrs;
    Shape shape;
    std::string leaf_name;  // leaves only
    Tensor<T> value;
    bool evaluated = false;
  };

  Var<T> leaf(const std::string& name, Shape shape);
  Var<T> constant(Tensor<T> value);
  Var<T> scalar(T value) { return constant(Tensor<T>::scalar(value)); }

  // elementwise
  Var<T> neg(Var<T> x);
  Var<T> abs(Var<T> x);
  Var<T> log(Var<T> x);
  Var<T> exp(Var<T> x);
  Var<T> sqrt(Var<T> x);
  Var<T> square(Var<T> x);
  Var<T> sin(Var<T> x);
  Var<T> cos(Var<T> x);
  Var<T> sigmoid(Var<T> x);
  Var<T> elu(Var<T> x);
  Var<T> clamp(Var<T> x, double lo, double hi);
  Var<T> add(Var<T> a, Var<T> b);
  Var<T> sub(Var<T> a, Var<T> b);
  Var<T> mul(Var<T> a, Var<T> b);
  Var<T> div(Var<T> a, Var<T> b);
  Var<T> min2(Var<T> a, Var<T> b);
  Var<T> max2(Var<T> a, Var<T> b);
  // reductions
  Var<T> sum(Var<T> x, std::vector<int> axes = {}, bool keepdims = false);
  Var<T> mean(Var<T> x, std::vector<int> axes = {}, bool keepdims = false);
  // shape
  Var<T> reshape(Var<T> x, Shape shape);
  Var<T> concat(const std::vector<Var<T>>& xs, int axis);
  Var<T> slice(Var<T> x, std::vector<int> starts, std::vector<int> sizes);
  Var<T> broadcast_to(Var<T> x, Shape shape);
  Var<T> upsample_nearest2x(Var<T> x);
  Var<T> resize_bilinear(Var<T> x, int out_h, int out_w);
  // neural
  Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad);
  Var<T> avg_pool3x3_reflect(Var<T> x);
  Var<T> channel_dropout(Var<T> x, double keep_prob, uint64_t seed);
  // sampling
  // Bilinear sample at pixel coordinates with border padding (out-of-range
  // coordinates clamp to the nearest edge pixel; clamped axes get zero grid
  // gradient). Pair with grid_in_bounds to mask invalid samples downstream.
  Var<T> grid_sample(Var<T> image, Var<T> grid);
  // 1 where (u,v) lies inside [0, img_w-1] x [0, img_h-1], else 0; not differentiated.
  Var<T> grid_in_bounds(Var<T> grid, int img_h, int img_w);
  // control
  Var<T> detach(Var<T> x);
  Var<T> cmp(Var<T> x, CmpMode mode, double threshold);

  void bind(const std::string& name, Tensor<T> value);

  // Forward pass over nodes [0, out.id]. Throws on unbound leaves and on the
  // first node producing a non-finite value.
  void evaluate(Var<T> out);

  const Tensor<T>& value(Var<T> v) const;

  // Reverse pass from a scalar output (implicit seed 1) or an explicit
  // adjoint seed of the output's shape. Returns gradients for every leaf;
  // leaves unreachable from `out` get zeros.
  std::map<std::string, Tensor<T>> backward(Var<T> out);
  std::map<std::string, Tensor<T>> backward(Var<T> out, const Tensor<T>& seed);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  const std::vector<std::string>& leaf_names() const { return leaf_names_; }

 private:
  Var<T> append(Op op, std::vector<int> inputs, OpAttrs attrs, Shape shape);
  Var<T> unary(Op op, Var<T> x);
  Var<T> binary(Op op, Var<T> a, Var<T> b);
  void forward_node(int id);
  void check_finite(int id) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> leaf_ids_;
  std::vector<std::string> leaf_names_;
};

template <typename T>
const Shape& Var<T>::shape() const {
  return tape->node(id).shape;
}

// Expression sugar so loss code reads like the math.
template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return a.tape->add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return a.tape->sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return a.tape->mul(a, b); }
template <typename T> Var<T> operator/(Var<T> a, Var<T> b) { return a.tape->div(a, b); }
template <typename T> Var<T> operator-(Var<T> x) { return x.tape->neg(x); }
template <typename T> Var<T> operator+(Var<T> a, double s) { return a + a.tape->scalar(static_cast<T>(s)); }
template <typename T> Var<T> operator+(double s, Var<T> a) { return a.tape->scalar(static_cast<T>(s)) + a; }
template <typename T> Var<T> operator-(Var<T> a, double s) { return a - a.tape->scalar(static_cast<T>(s)); }
template <typename T> Var<T> operator-(double s, Var<T> a) { return a.tape->scalar(static_cast<T>(s)) - a; }
template <typename T> Var<T> operator*(Var<T> a, double s) { return a * a.tape->scalar(static_cast<T>(s)); }
template <typename T> Var<T> operator*(double s, Var<T> a) { return a.tape->scalar(static_cast<T>(s)) * a; }
template <typename T> Var<T> operator/(Var<T> a, double s) { return a / a.tape->scalar(static_cast<T>(s)); }
template <typename T> Var<T> operator/(double s, Var<T> a) { return a.tape->scalar(static_cast<T>(s)) / a; }

extern template class Tape<float>;
extern template class Tape<double>;
extern template struct Var<float>;
extern template struct Var<double>;

}  // namespace ecdepth
