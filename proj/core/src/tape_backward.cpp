#include <algorithm>
#include <cmath>
#include <cstring>

#include "conv_kernels.hpp"
#include "ecdepth/rng.hpp"
#include "ecdepth/tape.hpp"

namespace ecdepth {

namespace {

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

inline int reflect1(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Accumulate the adjoints of a broadcasting binary op. fa/fb map
// (a, b, upstream) to the contribution for each operand; null skips a side.
template <typename T, typename FA, typename FB>
void binary_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& g,
                     Tensor<T>* ga, Tensor<T>* gb, FA fa, FB fb) {
  const T* pa = a.data();
  const T* pb = b.data();
  const T* pg = g.data();
  const int64_t count = g.size();
  if (same_shape(a.shape(), b.shape())) {
    if (ga) {
      T* out = ga->data();
      for (int64_t i = 0; i < count; ++i) out[i] += fa(pa[i], pb[i], pg[i]);
    }
    if (gb) {
      T* out = gb->data();
      for (int64_t i = 0; i < count; ++i) out[i] += fb(pa[i], pb[i], pg[i]);
    }
    return;
  }
  auto sa = broadcast_strides(a.shape(), g.shape());
  auto sb = broadcast_strides(b.shape(), g.shape());
  T* pga = ga ? ga->data() : nullptr;
  T* pgb = gb ? gb->data() : nullptr;
  IndexWalk walk(g.shape());
  int64_t i = 0;
  do {
    int64_t oa = walk.offset(sa), ob = walk.offset(sb);
    if (pga) pga[oa] += fa(pa[oa], pb[ob], pg[i]);
    if (pgb) pgb[ob] += fb(pa[oa], pb[ob], pg[i]);
    ++i;
  } while (walk.advance());
}

}  // namespace

template <typename T>
std::map<std::string, Tensor<T>> Tape<T>::backward(Var<T> out) {
  if (numel(node(out.id).shape) != 1)
    fail(ErrorCategory::shape, "backward: output is not scalar; supply an explicit seed");
  return backward(out, Tensor<T>(node(out.id).shape, T(1)));
}

template <typename T>
std::map<std::string, Tensor<T>> Tape<T>::backward(Var<T> out, const Tensor<T>& seed) {
  if (out.tape != this || out.id < 0 || out.id >= num_nodes())
    fail(ErrorCategory::shape, "backward: output is not on this tape");
  if (!nodes_[static_cast<size_t>(out.id)].evaluated)
    fail(ErrorCategory::runtime, "backward: evaluate the output first");
  if (!same_shape(seed.shape(), node(out.id).shape))
    fail(ErrorCategory::shape, "backward: seed shape " + shape_str(seed.shape()) +
                                   " does not match output " + shape_str(node(out.id).shape));

  // A node's gradient is worth materializing only if a leaf sits upstream.
  std::vector<char> needs(static_cast<size_t>(out.id) + 1, 0);
  for (int id = 0; id <= out.id; ++id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op == Op::leaf) {
      needs[static_cast<size_t>(id)] = 1;
    } else if (n.op != Op::constant && n.op != Op::detach && n.op != Op::cmp &&
               n.op != Op::grid_in_bounds) {
      for (int in : n.inputs)
        if (in <= out.id && needs[static_cast<size_t>(in)]) {
          needs[static_cast<size_t>(id)] = 1;
          break;
        }
    }
  }

  std::vector<Tensor<T>> grads(static_cast<size_t>(out.id) + 1);
  auto grad_ref = [&](int id) -> Tensor<T>& {
    Tensor<T>& g = grads[static_cast<size_t>(id)];
    if (g.size() == 0) g = Tensor<T>(nodes_[static_cast<size_t>(id)].shape, T(0));
    return g;
  };
  auto grad_ptr = [&](int id) -> Tensor<T>* {
    return needs[static_cast<size_t>(id)] ? &grad_ref(id) : nullptr;
  };
  if (needs[static_cast<size_t>(out.id)]) grad_ref(out.id) = seed;

  for (int id = out.id; id >= 0; --id) {
    if (grads[static_cast<size_t>(id)].size() == 0) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor<T>& g = grads[static_cast<size_t>(id)];
    const T* pg = g.data();
    const int64_t count = g.size();

    switch (n.op) {
      case Op::leaf:
      case Op::constant:
      case Op::detach:
      case Op::cmp:
      case Op::grid_in_bounds:
        break;

      case Op::neg: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] -= pg[i];
        }
        break;
      }
      case Op::abs: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i)
            px[i] += pg[i] * (x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0)));
        }
        break;
      }
      case Op::log: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i] / x[i];
        }
        break;
      }
      case Op::exp: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* y = n.value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i] * y[i];
        }
        break;
      }
      case Op::sqrt: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* y = n.value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i] / (T(2) * y[i]);
        }
        break;
      }
      case Op::square: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i] * T(2) * x[i];
        }
        break;
      }
      case Op::sin: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i] * std::cos(x[i]);
        }
        break;
      }
      case Op::cos: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] -= pg[i] * std::sin(x[i]);
        }
        break;
      }
      case Op::sigmoid: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* y = n.value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i] * y[i] * (T(1) - y[i]);
        }
        break;
      }
      case Op::elu: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          const T* y = n.value.data();
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i)
            px[i] += pg[i] * (x[i] > T(0) ? T(1) : y[i] + T(1));
        }
        break;
      }
      case Op::clamp: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          const T* x = nodes_[static_cast<size_t>(n.inputs[0])].value.data();
          const T lo = static_cast<T>(n.attrs.a), hi = static_cast<T>(n.attrs.b);
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i)
            px[i] += (x[i] >= lo && x[i] <= hi) ? pg[i] : T(0);
        }
        break;
      }

      case Op::add: {
        binary_backward(nodes_[static_cast<size_t>(n.inputs[0])].value,
                        nodes_[static_cast<size_t>(n.inputs[1])].value, g,
                        grad_ptr(n.inputs[0]), grad_ptr(n.inputs[1]),
                        [](T, T, T gv) { return gv; }, [](T, T, T gv) { return gv; });
        break;
      }
      case Op::sub: {
        binary_backward(nodes_[static_cast<size_t>(n.inputs[0])].value,
                        nodes_[static_cast<size_t>(n.inputs[1])].value, g,
                        grad_ptr(n.inputs[0]), grad_ptr(n.inputs[1]),
                        [](T, T, T gv) { return gv; }, [](T, T, T gv) { return -gv; });
        break;
      }
      case Op::mul: {
        binary_backward(nodes_[static_cast<size_t>(n.inputs[0])].value,
                        nodes_[static_cast<size_t>(n.inputs[1])].value, g,
                        grad_ptr(n.inputs[0]), grad_ptr(n.inputs[1]),
                        [](T, T bv, T gv) { return gv * bv; },
                        [](T av, T, T gv) { return gv * av; });
        break;
      }
      case Op::div: {
        binary_backward(nodes_[static_cast<size_t>(n.inputs[0])].value,
                        nodes_[static_cast<size_t>(n.inputs[1])].value, g,
                        grad_ptr(n.inputs[0]), grad_ptr(n.inputs[1]),
                        [](T, T bv, T gv) { return gv / bv; },
                        [](T av, T bv, T gv) { return -gv * av / (bv * bv); });
        break;
      }
      case Op::min2: {
        binary_backward(nodes_[static_cast<size_t>(n.inputs[0])].value,
                        nodes_[static_cast<size_t>(n.inputs[1])].value, g,
                        grad_ptr(n.inputs[0]), grad_ptr(n.inputs[1]),
                        [](T av, T bv, T gv) { return av <= bv ? gv : T(0); },
                        [](T av, T bv, T gv) { return av <= bv ? T(0) : gv; });
        break;
      }
      case Op::max2: {
        binary_backward(nodes_[static_cast<size_t>(n.inputs[0])].value,
                        nodes_[static_cast<size_t>(n.inputs[1])].value, g,
                        grad_ptr(n.inputs[0]), grad_ptr(n.inputs[1]),
                        [](T av, T bv, T gv) { return av >= bv ? gv : T(0); },
                        [](T av, T bv, T gv) { return av >= bv ? T(0) : gv; });
        break;
      }

      case Op::sum:
      case Op::mean: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        const Shape& ins = nodes_[static_cast<size_t>(n.inputs[0])].value.shape();
        std::vector<int64_t> ostride(ins.size(), 0);
        {
          auto full = row_major_strides(n.shape);
          size_t oi = 0;
          for (size_t d = 0; d < ins.size(); ++d) {
            bool reduced =
                std::binary_search(n.attrs.axes.begin(), n.attrs.axes.end(), static_cast<int>(d));
            if (reduced) {
              if (n.attrs.keepdims) ++oi;
            } else {
              ostride[d] = oi < full.size() ? full[oi] : 0;
              ++oi;
            }
          }
        }
        T denom = n.op == Op::mean
                      ? static_cast<T>(nodes_[static_cast<size_t>(n.inputs[0])].value.size() / count)
                      : T(1);
        T* px = gx->data();
        IndexWalk walk(ins);
        int64_t i = 0;
        do {
          px[i++] += pg[walk.offset(ostride)] / denom;
        } while (walk.advance());
        break;
      }

      case Op::reshape: {
        if (auto* gx = grad_ptr(n.inputs[0])) {
          T* px = gx->data();
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i];
        }
        break;
      }
      case Op::concat: {
        int axis = n.attrs.axis;
        auto strides = row_major_strides(n.shape);
        int64_t outer = 1;
        for (int d = 0; d < axis; ++d) outer *= n.shape[static_cast<size_t>(d)];
        int64_t inner = strides[static_cast<size_t>(axis)];
        int64_t total_axis = n.shape[static_cast<size_t>(axis)];
        int64_t axis_off = 0;
        for (int in_id : n.inputs) {
          const Shape& ishape = nodes_[static_cast<size_t>(in_id)].shape;
          int64_t ax = ishape[static_cast<size_t>(axis)];
          if (auto* gx = grad_ptr(in_id)) {
            T* px = gx->data();
            for (int64_t ou = 0; ou < outer; ++ou) {
              const T* src = pg + (ou * total_axis + axis_off) * inner;
              T* dst = px + ou * ax * inner;
              for (int64_t k = 0; k < ax * inner; ++k) dst[k] += src[k];
            }
          }
          axis_off += ax;
        }
        break;
      }
      case Op::slice: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        const Shape& ins = nodes_[static_cast<size_t>(n.inputs[0])].shape;
        auto istride = row_major_strides(ins);
        T* px = gx->data();
        IndexWalk walk(n.shape);
        int64_t i = 0;
        do {
          int64_t off = 0;
          for (size_t d = 0; d < ins.size(); ++d)
            off += (walk.idx[d] + n.attrs.starts[d]) * istride[d];
          px[off] += pg[i++];
        } while (walk.advance());
        break;
      }
      case Op::broadcast_to: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        auto sa = broadcast_strides(nodes_[static_cast<size_t>(n.inputs[0])].shape, n.shape);
        T* px = gx->data();
        IndexWalk walk(n.shape);
        int64_t i = 0;
        do {
          px[walk.offset(sa)] += pg[i++];
        } while (walk.advance());
        break;
      }
      case Op::upsample_nearest2x: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        const Shape& ins = nodes_[static_cast<size_t>(n.inputs[0])].shape;
        int64_t nc = static_cast<int64_t>(ins[0]) * ins[1];
        int ih = ins[2], iw = ins[3];
        T* px = gx->data();
        for (int64_t p = 0; p < nc; ++p) {
          T* xs = px + p * ih * iw;
          const T* gs = pg + p * (ih * 2) * (iw * 2);
          for (int y = 0; y < ih * 2; ++y)
            for (int xx = 0; xx < iw * 2; ++xx) xs[(y / 2) * iw + (xx / 2)] += gs[y * iw * 2 + xx];
        }
        break;
      }
      case Op::resize_bilinear: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        const Shape& ins = nodes_[static_cast<size_t>(n.inputs[0])].shape;
        int64_t nc = static_cast<int64_t>(ins[0]) * ins[1];
        int ih = ins[2], iw = ins[3], oh = n.shape[2], ow = n.shape[3];
        double sy = static_cast<double>(ih) / oh, sx = static_cast<double>(iw) / ow;
        T* px = gx->data();
        for (int64_t p = 0; p < nc; ++p) {
          T* xs = px + p * ih * iw;
          const T* gs = pg + p * oh * ow;
          for (int y = 0; y < oh; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(ih - 1));
            int y0 = std::min(static_cast<int>(fy), ih - 2 >= 0 ? ih - 2 : 0);
            double wy = fy - y0;
            int y1 = std::min(y0 + 1, ih - 1);
            for (int xx = 0; xx < ow; ++xx) {
              double fx = (xx + 0.5) * sx - 0.5;
              fx = std::min(std::max(fx, 0.0), static_cast<double>(iw - 1));
              int x0 = std::min(static_cast<int>(fx), iw - 2 >= 0 ? iw - 2 : 0);
              double wx = fx - x0;
              int x1 = std::min(x0 + 1, iw - 1);
              T gv = gs[y * ow + xx];
              xs[y0 * iw + x0] += static_cast<T>((1 - wy) * (1 - wx)) * gv;
              xs[y0 * iw + x1] += static_cast<T>((1 - wy) * wx) * gv;
              xs[y1 * iw + x0] += static_cast<T>(wy * (1 - wx)) * gv;
              xs[y1 * iw + x1] += static_cast<T>(wy * wx) * gv;
            }
          }
        }
        break;
      }

      case Op::conv2d: {
        const auto& xt = nodes_[static_cast<size_t>(n.inputs[0])].value;
        const auto& wt = nodes_[static_cast<size_t>(n.inputs[1])].value;
        const int N = xt.shape()[0], Ci = xt.shape()[1], H = xt.shape()[2], W = xt.shape()[3];
        const int Co = wt.shape()[0], Kh = wt.shape()[2], Kw = wt.shape()[3];
        const int stride = n.attrs.i0, pad = n.attrs.i1;
        const int Ho = n.shape[2], Wo = n.shape[3];
        const T* x = xt.data();
        const T* w = wt.data();
        const int64_t ckk = static_cast<int64_t>(Ci) * Kh * Kw;
        const int64_t how = static_cast<int64_t>(Ho) * Wo;
        if (auto* gb = grad_ptr(n.inputs[2])) {
          T* pb = gb->data();
          for (int co = 0; co < Co; ++co) {
            T acc = T(0);
            for (int nn = 0; nn < N; ++nn) {
              const T* gs = pg + (static_cast<int64_t>(nn) * Co + co) * how;
              for (int64_t k = 0; k < how; ++k) acc += gs[k];
            }
            pb[co] += acc;
          }
        }
        auto* gw = grad_ptr(n.inputs[1]);
        auto* gx = grad_ptr(n.inputs[0]);
        if (gw || gx) {
          std::vector<T> cols(static_cast<size_t>(ckk * how));
          for (int nn = 0; nn < N; ++nn) {
            const T* gn = pg + static_cast<int64_t>(nn) * Co * how;
            if (gw) {
              convk::im2col(x + static_cast<int64_t>(nn) * Ci * H * W, Ci, H, W, Kh, Kw, stride,
                            pad, Ho, Wo, cols.data());
              // gw (Co,CKK) += gout_n (Co,HoWo) * cols^T
              convk::gemm(Co, static_cast<int>(ckk), static_cast<int>(how), gn, false,
                          cols.data(), true, gw->data(), true);
            }
            if (gx) {
              // cols = w^T (CKK,Co) * gout_n (Co,HoWo), then scatter back
              convk::gemm(static_cast<int>(ckk), static_cast<int>(how), Co, w, true, gn, false,
                          cols.data(), false);
              convk::col2im_accumulate(cols.data(), Ci, H, W, Kh, Kw, stride, pad, Ho, Wo,
                                       gx->data() + static_cast<int64_t>(nn) * Ci * H * W);
            }
          }
        }
        break;
      }

      case Op::avg_pool3x3_reflect: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        const Shape& ins = nodes_[static_cast<size_t>(n.inputs[0])].shape;
        int64_t nc = static_cast<int64_t>(ins[0]) * ins[1];
        int H = ins[2], W = ins[3];
        T* px = gx->data();
        for (int64_t p = 0; p < nc; ++p) {
          T* xs = px + p * H * W;
          const T* gs = pg + p * H * W;
          for (int y = 0; y < H; ++y) {
            int ys[3] = {reflect1(y - 1, H), y, reflect1(y + 1, H)};
            for (int xx = 0; xx < W; ++xx) {
              int xsx[3] = {reflect1(xx - 1, W), xx, reflect1(xx + 1, W)};
              T gv = gs[y * W + xx] / T(9);
              for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) xs[ys[a] * W + xsx[b]] += gv;
            }
          }
        }
        break;
      }
      case Op::channel_dropout: {
        auto* gx = grad_ptr(n.inputs[0]);
        if (!gx) break;
        const Shape& ins = nodes_[static_cast<size_t>(n.inputs[0])].shape;
        const double keep = n.attrs.a;
        T* px = gx->data();
        if (keep >= 1.0) {
          for (int64_t i = 0; i < count; ++i) px[i] += pg[i];
          break;
        }
        const int N = ins[0], C = ins[1];
        const int64_t hw = static_cast<int64_t>(ins[2]) * ins[3];
        Rng rng(n.attrs.seed);
        const T scale = static_cast<T>(1.0 / keep);
        for (int nn = 0; nn < N; ++nn) {
          for (int c = 0; c < C; ++c) {
            bool keep_ch = rng.uniform() < keep;
            if (!keep_ch) continue;
            const T* gs = pg + (static_cast<int64_t>(nn) * C + c) * hw;
            T* xs = px + (static_cast<int64_t>(nn) * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) xs[i] += gs[i] * scale;
          }
        }
        break;
      }

      case Op::grid_sample: {
        const auto& img = nodes_[static_cast<size_t>(n.inputs[0])].value;
        const auto& grid = nodes_[static_cast<size_t>(n.inputs[1])].value;
        const int N = img.shape()[0], C = img.shape()[1], H = img.shape()[2], W = img.shape()[3];
        const int Hg = grid.shape()[2], Wg = grid.shape()[3];
        const int64_t ghw = static_cast<int64_t>(Hg) * Wg;
        const T* ip = img.data();
        const T* gp = grid.data();
        auto* gi = grad_ptr(n.inputs[0]);
        auto* gg = grad_ptr(n.inputs[1]);
        if (!gi && !gg) break;
        T* pgi = gi ? gi->data() : nullptr;
        T* pgg = gg ? gg->data() : nullptr;
        for (int nn = 0; nn < N; ++nn) {
          const T* gu = gp + static_cast<int64_t>(nn) * 2 * ghw;
          const T* gv = gu + ghw;
          for (int64_t q = 0; q < ghw; ++q) {
            // border padding: clamp like the forward pass; a clamped axis has
            // zero derivative w.r.t. the grid coordinate
            double u0 = gu[q], v0 = gv[q];
            bool u_in = u0 >= 0.0 && u0 <= W - 1, v_in = v0 >= 0.0 && v0 <= H - 1;
            double u = std::min(std::max(u0, 0.0), static_cast<double>(W - 1));
            double v = std::min(std::max(v0, 0.0), static_cast<double>(H - 1));
            int x0 = std::min(static_cast<int>(u), W - 2);
            int y0 = std::min(static_cast<int>(v), H - 2);
            double wx = u - x0, wy = v - y0;
            double du = 0.0, dv = 0.0;
            for (int c = 0; c < C; ++c) {
              const int64_t base_off = (static_cast<int64_t>(nn) * C + c) * H * W;
              const T* base = ip + base_off;
              T i00 = base[y0 * W + x0], i01 = base[y0 * W + x0 + 1];
              T i10 = base[(y0 + 1) * W + x0], i11 = base[(y0 + 1) * W + x0 + 1];
              T gv_out = pg[(static_cast<int64_t>(nn) * C + c) * ghw + q];
              if (pgi) {
                T* gbase = pgi + base_off;
                gbase[y0 * W + x0] += static_cast<T>((1 - wy) * (1 - wx)) * gv_out;
                gbase[y0 * W + x0 + 1] += static_cast<T>((1 - wy) * wx) * gv_out;
                gbase[(y0 + 1) * W + x0] += static_cast<T>(wy * (1 - wx)) * gv_out;
                gbase[(y0 + 1) * W + x0 + 1] += static_cast<T>(wy * wx) * gv_out;
              }
              if (pgg) {
                du += gv_out * ((1 - wy) * (i01 - i00) + wy * (i11 - i10));
                dv += gv_out * ((1 - wx) * (i10 - i00) + wx * (i11 - i01));
              }
            }
            if (pgg) {
              if (u_in) pgg[static_cast<int64_t>(nn) * 2 * ghw + q] += static_cast<T>(du);
              if (v_in) pgg[static_cast<int64_t>(nn) * 2 * ghw + ghw + q] += static_cast<T>(dv);
            }
          }
        }
        break;
      }

      default:
        fail(ErrorCategory::runtime, std::string("backward: unhandled op ") + op_name(n.op));
    }
  }

  std::map<std::string, Tensor<T>> result;
  for (const auto& [name, id] : leaf_ids_) {
    if (id <= out.id && grads[static_cast<size_t>(id)].size() != 0)
      result[name] = std::move(grads[static_cast<size_t>(id)]);
    else
      result[name] = Tensor<T>(nodes_[static_cast<size_t>(id)].shape, T(0));
  }
  return result;
}

template std::map<std::string, Tensor<float>> Tape<float>::backward(Var<float>);
template std::map<std::string, Tensor<double>> Tape<double>::backward(Var<double>);
template std::map<std::string, Tensor<float>> Tape<float>::backward(Var<float>, const Tensor<float>&);
template std::map<std::string, Tensor<double>> Tape<double>::backward(Var<double>, const Tensor<double>&);

}  // namespace ecdepth
