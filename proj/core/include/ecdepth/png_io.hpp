#pragma once

#include <string>

#include "ecdepth/tensor.hpp"

namespace ecdepth {

// Depth in meters with a validity mask; both (H,W). Encoded on disk as
// 16-bit grayscale PNG, pixel = round(depth * 256), 0 meaning invalid.
struct DepthMap {
  Tensor<double> depth;
  Tensor<double> valid;  // 1 where depth is defined
};

// 8-bit RGB only; returns (3,H,W) in [0,1].
Tensor<float> read_rgb_png(const std::string& path);
// Writes round(x*255), clamped.
void write_rgb_png(const Tensor<float>& image, const std::string& path);

DepthMap read_depth_png(const std::string& path);
// Depth above 255.996 m does not fit in 16 bits and is an error.
void write_depth_png(const DepthMap& d, const std::string& path);

}  // namespace ecdepth
