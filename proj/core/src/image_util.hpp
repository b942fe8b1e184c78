#pragma once

#include <algorithm>
#include <cmath>

#include "ecdepth/tensor.hpp"

// Internal image helpers shared by the perturbation engine and dataset IO.
namespace ecdepth::imgu {

// reflect-101 index: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect1(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

inline float sample_clamped(const float* plane, int H, int W, double y, double x) {
  x = std::min(static_cast<double>(W - 1), std::max(0.0, x));
  y = std::min(static_cast<double>(H - 1), std::max(0.0, y));
  int x0 = std::min(W - 2, static_cast<int>(std::floor(x)));
  int y0 = std::min(H - 2, static_cast<int>(std::floor(y)));
  if (W == 1) x0 = 0;
  if (H == 1) y0 = 0;
  double wx = x - x0, wy = y - y0;
  int x1 = std::min(W - 1, x0 + 1), y1 = std::min(H - 1, y0 + 1);
  double v = (1 - wy) * ((1 - wx) * plane[y0 * W + x0] + wx * plane[y0 * W + x1]) +
             wy * ((1 - wx) * plane[y1 * W + x0] + wx * plane[y1 * W + x1]);
  return static_cast<float>(v);
}

// Half-pixel bilinear resize of a (C,h,w) tensor.
inline Tensor<float> resize_chw(const Tensor<float>& img, int oh, int ow) {
  int C = static_cast<int>(img.dim(0)), H = static_cast<int>(img.dim(1)),
      W = static_cast<int>(img.dim(2));
  if (oh == H && ow == W) return img;
  Tensor<float> out({C, oh, ow}, 0.0f);
  double sy = static_cast<double>(H) / oh, sx = static_cast<double>(W) / ow;
  for (int c = 0; c < C; ++c) {
    const float* src = img.data() + static_cast<size_t>(c) * H * W;
    float* dst = out.data() + static_cast<size_t>(c) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      double srcy = (y + 0.5) * sy - 0.5;
      for (int x = 0; x < ow; ++x) {
        double srcx = (x + 0.5) * sx - 0.5;
        dst[y * ow + x] = sample_clamped(src, H, W, srcy, srcx);
      }
    }
  }
  return out;
}

}  // namespace ecdepth::imgu
