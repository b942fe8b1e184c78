#include "ecdepth/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "conv_kernels.hpp"
#include "ecdepth/rng.hpp"

namespace ecdepth {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::neg: return "neg";
    case Op::abs: return "abs";
    case Op::log: return "log";
    case Op::exp: return "exp";
    case Op::sqrt: return "sqrt";
    case Op::square: return "square";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::sigmoid: return "sigmoid";
    case Op::elu: return "elu";
    case Op::clamp: return "clamp";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::min2: return "min";
    case Op::max2: return "max";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::reshape: return "reshape";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::broadcast_to: return "broadcast_to";
    case Op::upsample_nearest2x: return "upsample_nearest2x";
    case Op::resize_bilinear: return "resize_bilinear";
    case Op::conv2d: return "conv2d";
    case Op::avg_pool3x3_reflect: return "avg_pool3x3_reflect";
    case Op::channel_dropout: return "channel_dropout";
    case Op::grid_sample: return "grid_sample";
    case Op::grid_in_bounds: return "grid_in_bounds";
    case Op::detach: return "detach";
    case Op::cmp: return "cmp";
  }
  return "?";
}

namespace {

// Odometer over a shape; pairs a linear walk of `shape` with a strided offset
// into another tensor (stride 0 on broadcast dims).
struct IndexWalk {
  const Shape& shape;
  std::vector<int> idx;
  explicit IndexWalk(const Shape& s) : shape(s), idx(s.size(), 0) {}
  bool advance() {
    for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < shape[static_cast<size_t>(d)]) return true;
      idx[static_cast<size_t>(d)] = 0;
    }
    return false;
  }
  int64_t offset(const std::vector<int64_t>& strides) const {
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) off += idx[d] * strides[d];
    return off;
  }
};

std::vector<int> normalize_axes(const std::vector<int>& axes, int rank) {
  std::vector<int> out;
  if (axes.empty()) {
    for (int i = 0; i < rank; ++i) out.push_back(i);
    return out;
  }
  out = axes;
  for (int& a : out) {
    if (a < 0) a += rank;
    if (a < 0 || a >= rank) fail(ErrorCategory::shape, "reduction axis out of range");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Reflect-101 index for 1-pixel padding.
inline int reflect1(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

template <typename T>
inline T sigmoid_val(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph building

template <typename T>
Var<T> Tape<T>::append(Op op, std::vector<int> inputs, OpAttrs attrs, Shape shape) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.attrs = std::move(attrs);
  n.shape = std::move(shape);
  nodes_.push_back(std::move(n));
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::leaf(const std::string& name, Shape shape) {
  if (leaf_ids_.count(name)) fail(ErrorCategory::shape, "duplicate leaf name: " + name);
  OpAttrs attrs;
  Var<T> v = append(Op::leaf, {}, attrs, shape);
  nodes_.back().leaf_name = name;
  leaf_ids_[name] = v.id;
  leaf_names_.push_back(name);
  return v;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Shape s = value.shape();
  Var<T> v = append(Op::constant, {}, OpAttrs{}, s);
  nodes_.back().value = std::move(value);
  nodes_.back().evaluated = true;
  return v;
}

template <typename T>
Var<T> Tape<T>::unary(Op op, Var<T> x) {
  return append(op, {x.id}, OpAttrs{}, node(x.id).shape);
}

template <typename T>
Var<T> Tape<T>::binary(Op op, Var<T> a, Var<T> b) {
  Shape s = broadcast_shapes(node(a.id).shape, node(b.id).shape, op_name(op));
  return append(op, {a.id, b.id}, OpAttrs{}, s);
}

template <typename T> Var<T> Tape<T>::neg(Var<T> x) { return unary(Op::neg, x); }
template <typename T> Var<T> Tape<T>::abs(Var<T> x) { return unary(Op::abs, x); }
template <typename T> Var<T> Tape<T>::log(Var<T> x) { return unary(Op::log, x); }
template <typename T> Var<T> Tape<T>::exp(Var<T> x) { return unary(Op::exp, x); }
template <typename T> Var<T> Tape<T>::sqrt(Var<T> x) { return unary(Op::sqrt, x); }
template <typename T> Var<T> Tape<T>::square(Var<T> x) { return unary(Op::square, x); }
template <typename T> Var<T> Tape<T>::sin(Var<T> x) { return unary(Op::sin, x); }
template <typename T> Var<T> Tape<T>::cos(Var<T> x) { return unary(Op::cos, x); }
template <typename T> Var<T> Tape<T>::sigmoid(Var<T> x) { return unary(Op::sigmoid, x); }
template <typename T> Var<T> Tape<T>::elu(Var<T> x) { return unary(Op::elu, x); }

template <typename T>
Var<T> Tape<T>::clamp(Var<T> x, double lo, double hi) {
  OpAttrs attrs;
  attrs.a = lo;
  attrs.b = hi;
  return append(Op::clamp, {x.id}, attrs, node(x.id).shape);
}

template <typename T> Var<T> Tape<T>::add(Var<T> a, Var<T> b) { return binary(Op::add, a, b); }
template <typename T> Var<T> Tape<T>::sub(Var<T> a, Var<T> b) { return binary(Op::sub, a, b); }
template <typename T> Var<T> Tape<T>::mul(Var<T> a, Var<T> b) { return binary(Op::mul, a, b); }
template <typename T> Var<T> Tape<T>::div(Var<T> a, Var<T> b) { return binary(Op::div, a, b); }
template <typename T> Var<T> Tape<T>::min2(Var<T> a, Var<T> b) { return binary(Op::min2, a, b); }
template <typename T> Var<T> Tape<T>::max2(Var<T> a, Var<T> b) { return binary(Op::max2, a, b); }

template <typename T>
Var<T> Tape<T>::sum(Var<T> x, std::vector<int> axes, bool keepdims) {
  const Shape& in = node(x.id).shape;
  auto ax = normalize_axes(axes, static_cast<int>(in.size()));
  Shape out;
  for (int d = 0; d < static_cast<int>(in.size()); ++d) {
    bool reduced = std::binary_search(ax.begin(), ax.end(), d);
    if (reduced) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(in[static_cast<size_t>(d)]);
    }
  }
  if (out.empty()) out = {1};
  OpAttrs attrs;
  attrs.axes = ax;
  attrs.keepdims = keepdims;
  return append(Op::sum, {x.id}, attrs, out);
}

template <typename T>
Var<T> Tape<T>::mean(Var<T> x, std::vector<int> axes, bool keepdims) {
  Var<T> s = sum(x, axes, keepdims);
  nodes_.back().op = Op::mean;
  return s;
}

template <typename T>
Var<T> Tape<T>::reshape(Var<T> x, Shape shape) {
  if (numel(shape) != numel(node(x.id).shape))
    fail(ErrorCategory::shape,
         "reshape: " + shape_str(node(x.id).shape) + " -> " + shape_str(shape) + " changes element count");
  OpAttrs attrs;
  attrs.shape = shape;
  return append(Op::reshape, {x.id}, attrs, shape);
}

template <typename T>
Var<T> Tape<T>::concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) fail(ErrorCategory::shape, "concat: no inputs");
  Shape out = node(xs[0].id).shape;
  int rank = static_cast<int>(out.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) fail(ErrorCategory::shape, "concat: axis out of range");
  std::vector<int> ids{xs[0].id};
  for (size_t i = 1; i < xs.size(); ++i) {
    const Shape& s = node(xs[i].id).shape;
    if (static_cast<int>(s.size()) != rank) fail(ErrorCategory::shape, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && s[static_cast<size_t>(d)] != out[static_cast<size_t>(d)])
        fail(ErrorCategory::shape,
             "concat: shapes " + shape_str(out) + " and " + shape_str(s) + " differ off-axis");
    out[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
    ids.push_back(xs[i].id);
  }
  OpAttrs attrs;
  attrs.axis = axis;
  return append(Op::concat, ids, attrs, out);
}

template <typename T>
Var<T> Tape<T>::slice(Var<T> x, std::vector<int> starts, std::vector<int> sizes) {
  const Shape& in = node(x.id).shape;
  if (starts.size() != in.size() || sizes.size() != in.size())
    fail(ErrorCategory::shape, "slice: starts/sizes rank mismatch with " + shape_str(in));
  Shape out;
  for (size_t d = 0; d < in.size(); ++d) {
    if (starts[d] < 0 || sizes[d] <= 0 || starts[d] + sizes[d] > in[d])
      fail(ErrorCategory::shape, "slice: window out of range in " + shape_str(in));
    out.push_back(sizes[d]);
  }
  OpAttrs attrs;
  attrs.starts = starts;
  attrs.sizes = sizes;
  return append(Op::slice, {x.id}, attrs, out);
}

template <typename T>
Var<T> Tape<T>::broadcast_to(Var<T> x, Shape shape) {
  Shape check = broadcast_shapes(node(x.id).shape, shape, "broadcast_to");
  if (check != shape)
    fail(ErrorCategory::shape,
         "broadcast_to: " + shape_str(node(x.id).shape) + " does not broadcast to " + shape_str(shape));
  OpAttrs attrs;
  attrs.shape = shape;
  return append(Op::broadcast_to, {x.id}, attrs, shape);
}

template <typename T>
Var<T> Tape<T>::upsample_nearest2x(Var<T> x) {
  Shape in = node(x.id).shape;
  if (in.size() != 4) fail(ErrorCategory::shape, "upsample_nearest2x: expected NCHW, got " + shape_str(in));
  Shape out = {in[0], in[1], in[2] * 2, in[3] * 2};
  return append(Op::upsample_nearest2x, {x.id}, OpAttrs{}, out);
}

template <typename T>
Var<T> Tape<T>::resize_bilinear(Var<T> x, int out_h, int out_w) {
  Shape in = node(x.id).shape;
  if (in.size() != 4) fail(ErrorCategory::shape, "resize_bilinear: expected NCHW, got " + shape_str(in));
  if (out_h <= 0 || out_w <= 0) fail(ErrorCategory::shape, "resize_bilinear: bad target size");
  OpAttrs attrs;
  attrs.i0 = out_h;
  attrs.i1 = out_w;
  return append(Op::resize_bilinear, {x.id}, attrs, Shape{in[0], in[1], out_h, out_w});
}

template <typename T>
Var<T> Tape<T>::conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  const Shape& xs = node(x.id).shape;
  const Shape& ws = node(w.id).shape;
  const Shape& bs = node(b.id).shape;
  if (xs.size() != 4 || ws.size() != 4)
    fail(ErrorCategory::shape, "conv2d: expected NCHW input and OIHW weight, got " + shape_str(xs) + " " + shape_str(ws));
  if (xs[1] != ws[1])
    fail(ErrorCategory::shape, "conv2d: input channels " + shape_str(xs) + " vs weight " + shape_str(ws));
  if (bs.size() != 1 || bs[0] != ws[0])
    fail(ErrorCategory::shape, "conv2d: bias shape " + shape_str(bs) + " vs weight " + shape_str(ws));
  if (stride < 1 || pad < 0) fail(ErrorCategory::shape, "conv2d: bad stride/pad");
  int oh = (xs[2] + 2 * pad - ws[2]) / stride + 1;
  int ow = (xs[3] + 2 * pad - ws[3]) / stride + 1;
  if (oh <= 0 || ow <= 0) fail(ErrorCategory::shape, "conv2d: empty output for input " + shape_str(xs));
  OpAttrs attrs;
  attrs.i0 = stride;
  attrs.i1 = pad;
  return append(Op::conv2d, {x.id, w.id, b.id}, attrs, Shape{xs[0], ws[0], oh, ow});
}

template <typename T>
Var<T> Tape<T>::avg_pool3x3_reflect(Var<T> x) {
  const Shape& in = node(x.id).shape;
  if (in.size() != 4) fail(ErrorCategory::shape, "avg_pool3x3_reflect: expected NCHW, got " + shape_str(in));
  if (in[2] < 2 || in[3] < 2) fail(ErrorCategory::shape, "avg_pool3x3_reflect: spatial dims must be >= 2");
  return append(Op::avg_pool3x3_reflect, {x.id}, OpAttrs{}, in);
}

template <typename T>
Var<T> Tape<T>::channel_dropout(Var<T> x, double keep_prob, uint64_t seed) {
  const Shape& in = node(x.id).shape;
  if (in.size() != 4) fail(ErrorCategory::shape, "channel_dropout: expected NCHW, got " + shape_str(in));
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    fail(ErrorCategory::shape, "channel_dropout: keep probability must be in (0,1]");
  OpAttrs attrs;
  attrs.a = keep_prob;
  attrs.seed = seed;
  return append(Op::channel_dropout, {x.id}, attrs, in);
}

template <typename T>
Var<T> Tape<T>::grid_sample(Var<T> image, Var<T> grid) {
  const Shape& is = node(image.id).shape;
  const Shape& gs = node(grid.id).shape;
  if (is.size() != 4 || gs.size() != 4 || gs[1] != 2 || is[0] != gs[0])
    fail(ErrorCategory::shape, "grid_sample: expected NCHW image and [N,2,H,W] grid, got " + shape_str(is) + " " + shape_str(gs));
  if (is[2] < 2 || is[3] < 2) fail(ErrorCategory::shape, "grid_sample: image spatial dims must be >= 2");
  return append(Op::grid_sample, {image.id, grid.id}, OpAttrs{}, Shape{is[0], is[1], gs[2], gs[3]});
}

template <typename T>
Var<T> Tape<T>::grid_in_bounds(Var<T> grid, int img_h, int img_w) {
  const Shape& gs = node(grid.id).shape;
  if (gs.size() != 4 || gs[1] != 2)
    fail(ErrorCategory::shape, "grid_in_bounds: expected [N,2,H,W] grid, got " + shape_str(gs));
  if (img_h < 2 || img_w < 2) fail(ErrorCategory::shape, "grid_in_bounds: bad image size");
  OpAttrs attrs;
  attrs.i0 = img_h;
  attrs.i1 = img_w;
  return append(Op::grid_in_bounds, {grid.id}, attrs, Shape{gs[0], 1, gs[2], gs[3]});
}

template <typename T>
Var<T> Tape<T>::detach(Var<T> x) { return unary(Op::detach, x); }

template <typename T>
Var<T> Tape<T>::cmp(Var<T> x, CmpMode mode, double threshold) {
  OpAttrs attrs;
  attrs.a = threshold;
  attrs.cmp_mode = mode;
  return append(Op::cmp, {x.id}, attrs, node(x.id).shape);
}

// ---------------------------------------------------------------------------
// Forward

template <typename T>
void Tape<T>::bind(const std::string& name, Tensor<T> value) {
  auto it = leaf_ids_.find(name);
  if (it == leaf_ids_.end()) fail(ErrorCategory::shape, "bind: unknown leaf " + name);
  Node& n = nodes_[static_cast<size_t>(it->second)];
  if (!same_shape(n.shape, value.shape()))
    fail(ErrorCategory::shape,
         "bind: leaf " + name + " declared " + shape_str(n.shape) + ", bound " + shape_str(value.shape()));
  n.value = std::move(value);
  n.evaluated = true;
}

template <typename T>
void Tape<T>::check_finite(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.value.all_finite())
    fail(ErrorCategory::numeric,
         std::string("non-finite value at node #") + std::to_string(id) + " (" + op_name(n.op) + ")");
}

template <typename T>
void Tape<T>::evaluate(Var<T> out) {
  if (out.tape != this || out.id < 0 || out.id >= num_nodes())
    fail(ErrorCategory::shape, "evaluate: output is not on this tape");
  for (int id = 0; id <= out.id; ++id) {
    forward_node(id);
    check_finite(id);
  }
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
  const Node& n = node(v.id);
  if (!n.evaluated) fail(ErrorCategory::runtime, "value: node not evaluated");
  return n.value;
}

template <typename T>
void Tape<T>::forward_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  switch (n.op) {
    case Op::leaf:
      if (!n.evaluated) fail(ErrorCategory::runtime, "evaluate: unbound leaf " + n.leaf_name);
      return;
    case Op::constant:
      return;
    default:
      break;
  }

  auto& in0 = nodes_[static_cast<size_t>(n.inputs.empty() ? 0 : n.inputs[0])].value;
  Tensor<T> out(n.shape);
  T* o = out.data();
  const int64_t count = out.size();

  switch (n.op) {
    case Op::neg: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = -x[i];
      break;
    }
    case Op::abs: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = std::abs(x[i]);
      break;
    }
    case Op::log: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = std::log(x[i]);
      break;
    }
    case Op::exp: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = std::exp(x[i]);
      break;
    }
    case Op::sqrt: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = std::sqrt(x[i]);
      break;
    }
    case Op::square: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = x[i] * x[i];
      break;
    }
    case Op::sin: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = std::sin(x[i]);
      break;
    }
    case Op::cos: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = std::cos(x[i]);
      break;
    }
    case Op::sigmoid: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = sigmoid_val(x[i]);
      break;
    }
    case Op::elu: {
      const T* x = in0.data();
      for (int64_t i = 0; i < count; ++i) o[i] = x[i] > T(0) ? x[i] : std::expm1(x[i]);
      break;
    }
    case Op::clamp: {
      const T* x = in0.data();
      const T lo = static_cast<T>(n.attrs.a), hi = static_cast<T>(n.attrs.b);
      for (int64_t i = 0; i < count; ++i) o[i] = std::min(std::max(x[i], lo), hi);
      break;
    }
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div:
    case Op::min2:
    case Op::max2: {
      const auto& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
      const auto& b = nodes_[static_cast<size_t>(n.inputs[1])].value;
      const T* pa = a.data();
      const T* pb = b.data();
      auto apply = [op = n.op](T x, T y) -> T {
        switch (op) {
          case Op::add: return x + y;
          case Op::sub: return x - y;
          case Op::mul: return x * y;
          case Op::div: return x / y;
          case Op::min2: return x <= y ? x : y;
          default: return x >= y ? x : y;  // max2, ties to first operand
        }
      };
      if (same_shape(a.shape(), b.shape())) {
        for (int64_t i = 0; i < count; ++i) o[i] = apply(pa[i], pb[i]);
      } else if (b.size() == 1) {
        const T y = pb[0];
        for (int64_t i = 0; i < count; ++i) o[i] = apply(pa[i], y);
      } else if (a.size() == 1) {
        const T x = pa[0];
        for (int64_t i = 0; i < count; ++i) o[i] = apply(x, pb[i]);
      } else {
        auto sa = broadcast_strides(a.shape(), n.shape);
        auto sb = broadcast_strides(b.shape(), n.shape);
        IndexWalk walk(n.shape);
        int64_t i = 0;
        do {
          o[i++] = apply(pa[walk.offset(sa)], pb[walk.offset(sb)]);
        } while (walk.advance());
      }
      break;
    }
    case Op::sum:
    case Op::mean: {
      const Shape& ins = in0.shape();
      std::vector<int64_t> ostride(ins.size(), 0);
      {
        auto full = row_major_strides(n.shape);
        size_t oi = 0;
        for (size_t d = 0; d < ins.size(); ++d) {
          bool reduced = std::binary_search(n.attrs.axes.begin(), n.attrs.axes.end(), static_cast<int>(d));
          if (reduced) {
            if (n.attrs.keepdims) ++oi;  // size-1 dim, stride contribution 0
            ostride[d] = 0;
          } else {
            ostride[d] = oi < full.size() ? full[oi] : 0;
            ++oi;
          }
        }
      }
      std::fill(o, o + count, T(0));
      const T* x = in0.data();
      IndexWalk walk(ins);
      int64_t i = 0;
      do {
        o[walk.offset(ostride)] += x[i++];
      } while (walk.advance());
      if (n.op == Op::mean) {
        T denom = static_cast<T>(in0.size() / count);
        for (int64_t k = 0; k < count; ++k) o[k] /= denom;
      }
      break;
    }
    case Op::reshape: {
      std::memcpy(o, in0.data(), sizeof(T) * static_cast<size_t>(count));
      break;
    }
    case Op::concat: {
      int axis = n.attrs.axis;
      auto strides = row_major_strides(n.shape);
      int64_t outer = 1;
      for (int d = 0; d < axis; ++d) outer *= n.shape[static_cast<size_t>(d)];
      int64_t inner = strides[static_cast<size_t>(axis)];
      int64_t axis_off = 0;
      for (int in_id : n.inputs) {
        const auto& x = nodes_[static_cast<size_t>(in_id)].value;
        int64_t ax = x.shape()[static_cast<size_t>(axis)];
        int64_t blk = ax * inner;
        const T* px = x.data();
        for (int64_t ou = 0; ou < outer; ++ou)
          std::memcpy(o + ou * n.shape[static_cast<size_t>(axis)] * inner + axis_off * inner,
                      px + ou * blk, sizeof(T) * static_cast<size_t>(blk));
        axis_off += ax;
      }
      break;
    }
    case Op::slice: {
      const Shape& ins = in0.shape();
      auto istride = row_major_strides(ins);
      const T* x = in0.data();
      IndexWalk walk(n.shape);
      int64_t i = 0;
      do {
        int64_t off = 0;
        for (size_t d = 0; d < ins.size(); ++d)
          off += (walk.idx[d] + n.attrs.starts[d]) * istride[d];
        o[i++] = x[off];
      } while (walk.advance());
      break;
    }
    case Op::broadcast_to: {
      auto sa = broadcast_strides(in0.shape(), n.shape);
      const T* x = in0.data();
      IndexWalk walk(n.shape);
      int64_t i = 0;
      do {
        o[i++] = x[walk.offset(sa)];
      } while (walk.advance());
      break;
    }
    case Op::upsample_nearest2x: {
      const Shape& ins = in0.shape();
      int64_t nc = static_cast<int64_t>(ins[0]) * ins[1];
      int ih = ins[2], iw = ins[3];
      const T* x = in0.data();
      for (int64_t p = 0; p < nc; ++p) {
        const T* xs = x + p * ih * iw;
        T* os = o + p * (ih * 2) * (iw * 2);
        for (int y = 0; y < ih * 2; ++y)
          for (int xx = 0; xx < iw * 2; ++xx)
            os[y * iw * 2 + xx] = xs[(y / 2) * iw + (xx / 2)];
      }
      break;
    }
    case Op::resize_bilinear: {
      const Shape& ins = in0.shape();
      int64_t nc = static_cast<int64_t>(ins[0]) * ins[1];
      int ih = ins[2], iw = ins[3], oh = n.shape[2], ow = n.shape[3];
      double sy = static_cast<double>(ih) / oh, sx = static_cast<double>(iw) / ow;
      const T* x = in0.data();
      for (int64_t p = 0; p < nc; ++p) {
        const T* xs = x + p * ih * iw;
        T* os = o + p * oh * ow;
        for (int y = 0; y < oh; ++y) {
          double fy = (y + 0.5) * sy - 0.5;
          fy = std::min(std::max(fy, 0.0), static_cast<double>(ih - 1));
          int y0 = std::min(static_cast<int>(fy), ih - 2 >= 0 ? ih - 2 : 0);
          double wy = fy - y0;
          for (int xx = 0; xx < ow; ++xx) {
            double fx = (xx + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(iw - 1));
            int x0 = std::min(static_cast<int>(fx), iw - 2 >= 0 ? iw - 2 : 0);
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, iw - 1), y1 = std::min(y0 + 1, ih - 1);
            double v = (1 - wy) * ((1 - wx) * xs[y0 * iw + x0] + wx * xs[y0 * iw + x1]) +
                       wy * ((1 - wx) * xs[y1 * iw + x0] + wx * xs[y1 * iw + x1]);
            os[y * ow + xx] = static_cast<T>(v);
          }
        }
      }
      break;
    }
    case Op::conv2d: {
      const auto& xt = nodes_[static_cast<size_t>(n.inputs[0])].value;
      const auto& wt = nodes_[static_cast<size_t>(n.inputs[1])].value;
      const auto& bt = nodes_[static_cast<size_t>(n.inputs[2])].value;
      const int N = xt.shape()[0], Ci = xt.shape()[1], H = xt.shape()[2], W = xt.shape()[3];
      const int Co = wt.shape()[0], Kh = wt.shape()[2], Kw = wt.shape()[3];
      const int stride = n.attrs.i0, pad = n.attrs.i1;
      const int Ho = n.shape[2], Wo = n.shape[3];
      const T* x = xt.data();
      const T* w = wt.data();  // (Co, Ci*Kh*Kw) row-major as stored
      const T* bias = bt.data();
      const int64_t ckk = static_cast<int64_t>(Ci) * Kh * Kw;
      const int64_t how = static_cast<int64_t>(Ho) * Wo;
      std::vector<T> cols(static_cast<size_t>(ckk * how));
      for (int nn = 0; nn < N; ++nn) {
        convk::im2col(x + static_cast<int64_t>(nn) * Ci * H * W, Ci, H, W, Kh, Kw, stride, pad,
                      Ho, Wo, cols.data());
        T* on = o + static_cast<int64_t>(nn) * Co * how;
        convk::gemm(Co, static_cast<int>(how), static_cast<int>(ckk), w, false, cols.data(),
                    false, on, false);
        for (int co = 0; co < Co; ++co) {
          T* row = on + static_cast<int64_t>(co) * how;
          const T bv = bias[co];
          for (int64_t q = 0; q < how; ++q) row[q] += bv;
        }
      }
      break;
    }
    case Op::avg_pool3x3_reflect: {
      const Shape& ins = in0.shape();
      int64_t nc = static_cast<int64_t>(ins[0]) * ins[1];
      int H = ins[2], W = ins[3];
      const T* x = in0.data();
      for (int64_t p = 0; p < nc; ++p) {
        const T* xs = x + p * H * W;
        T* os = o + p * H * W;
        for (int y = 0; y < H; ++y) {
          int ym = reflect1(y - 1, H), yp = reflect1(y + 1, H);
          for (int xx = 0; xx < W; ++xx) {
            int xm = reflect1(xx - 1, W), xp = reflect1(xx + 1, W);
            T acc = xs[ym * W + xm] + xs[ym * W + xx] + xs[ym * W + xp] +
                    xs[y * W + xm] + xs[y * W + xx] + xs[y * W + xp] +
                    xs[yp * W + xm] + xs[yp * W + xx] + xs[yp * W + xp];
            os[y * W + xx] = acc / T(9);
          }
        }
      }
      break;
    }
    case Op::channel_dropout: {
      const Shape& ins = in0.shape();
      const T* x = in0.data();
      const double keep = n.attrs.a;
      if (keep >= 1.0) {
        std::memcpy(o, x, sizeof(T) * static_cast<size_t>(count));
        break;
      }
      const int N = ins[0], C = ins[1];
      const int64_t hw = static_cast<int64_t>(ins[2]) * ins[3];
      Rng rng(n.attrs.seed);
      const T scale = static_cast<T>(1.0 / keep);
      for (int nn = 0; nn < N; ++nn) {
        for (int c = 0; c < C; ++c) {
          bool keep_ch = rng.uniform() < keep;
          const T* xs = x + (static_cast<int64_t>(nn) * C + c) * hw;
          T* os = o + (static_cast<int64_t>(nn) * C + c) * hw;
          if (keep_ch)
            for (int64_t i = 0; i < hw; ++i) os[i] = xs[i] * scale;
          else
            std::fill(os, os + hw, T(0));
        }
      }
      break;
    }
    case Op::grid_sample: {
      const auto& img = nodes_[static_cast<size_t>(n.inputs[0])].value;
      const auto& grid = nodes_[static_cast<size_t>(n.inputs[1])].value;
      const int N = img.shape()[0], C = img.shape()[1], H = img.shape()[2], W = img.shape()[3];
      const int Hg = grid.shape()[2], Wg = grid.shape()[3];
      const T* ip = img.data();
      const T* gp = grid.data();
      const int64_t ghw = static_cast<int64_t>(Hg) * Wg;
      for (int nn = 0; nn < N; ++nn) {
        const T* gu = gp + static_cast<int64_t>(nn) * 2 * ghw;
        const T* gv = gu + ghw;
        for (int64_t q = 0; q < ghw; ++q) {
          // border padding: out-of-range coordinates sample the edge pixel
          double u = std::min(std::max(static_cast<double>(gu[q]), 0.0), static_cast<double>(W - 1));
          double v = std::min(std::max(static_cast<double>(gv[q]), 0.0), static_cast<double>(H - 1));
          int x0 = std::min(static_cast<int>(u), W - 2);
          int y0 = std::min(static_cast<int>(v), H - 2);
          double wx = u - x0, wy = v - y0;
          for (int c = 0; c < C; ++c) {
            const T* base = ip + (static_cast<int64_t>(nn) * C + c) * H * W;
            double val = (1 - wy) * ((1 - wx) * base[y0 * W + x0] + wx * base[y0 * W + x0 + 1]) +
                         wy * ((1 - wx) * base[(y0 + 1) * W + x0] + wx * base[(y0 + 1) * W + x0 + 1]);
            o[(static_cast<int64_t>(nn) * C + c) * ghw + q] = static_cast<T>(val);
          }
        }
      }
      break;
    }
    case Op::grid_in_bounds: {
      const auto& grid = in0;
      const int N = grid.shape()[0], Hg = grid.shape()[2], Wg = grid.shape()[3];
      const int H = n.attrs.i0, W = n.attrs.i1;
      const T* gp = grid.data();
      const int64_t ghw = static_cast<int64_t>(Hg) * Wg;
      for (int nn = 0; nn < N; ++nn) {
        const T* gu = gp + static_cast<int64_t>(nn) * 2 * ghw;
        const T* gv = gu + ghw;
        T* os = o + static_cast<int64_t>(nn) * ghw;
        for (int64_t q = 0; q < ghw; ++q) {
          double u = gu[q], v = gv[q];
          os[q] = (u >= 0.0 && u <= W - 1 && v >= 0.0 && v <= H - 1) ? T(1) : T(0);
        }
      }
      break;
    }
    case Op::detach: {
      std::memcpy(o, in0.data(), sizeof(T) * static_cast<size_t>(count));
      break;
    }
    case Op::cmp: {
      const T* x = in0.data();
      const T t = static_cast<T>(n.attrs.a);
      switch (n.attrs.cmp_mode) {
        case CmpMode::lt: for (int64_t i = 0; i < count; ++i) o[i] = x[i] < t ? T(1) : T(0); break;
        case CmpMode::le: for (int64_t i = 0; i < count; ++i) o[i] = x[i] <= t ? T(1) : T(0); break;
        case CmpMode::gt: for (int64_t i = 0; i < count; ++i) o[i] = x[i] > t ? T(1) : T(0); break;
        case CmpMode::ge: for (int64_t i = 0; i < count; ++i) o[i] = x[i] >= t ? T(1) : T(0); break;
      }
      break;
    }
    default:
      fail(ErrorCategory::runtime, std::string("forward: unhandled op ") + op_name(n.op));
  }
  n.value = std::move(out);
  n.evaluated = true;
}

template class Tape<float>;
template class Tape<double>;
template struct Var<float>;
template struct Var<double>;

}  // namespace ecdepth
