#include "ecdepth/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "ecdepth/error.hpp"

namespace ecdepth {

namespace {

struct FileCloser {
  FILE* fp = nullptr;
  ~FileCloser() {
    if (fp) std::fclose(fp);
  }
};

struct PngHeader {
  int width = 0, height = 0, bit_depth = 0, color_type = 0;
};

// Reads the whole PNG into row bytes. Row stride is the libpng row size.
PngHeader read_png_rows(const std::string& path, std::vector<uint8_t>& bytes, size_t& stride) {
  FileCloser f;
  f.fp = std::fopen(path.c_str(), "rb");
  if (!f.fp) fail(ErrorCategory::io, "cannot open PNG for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    fail(ErrorCategory::runtime, "libpng allocation failure");
  }
  std::vector<png_bytep> rows;
  PngHeader h;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCategory::format, "malformed PNG: " + path);
  }
  png_init_io(png, f.fp);
  png_read_info(png, info);
  h.width = static_cast<int>(png_get_image_width(png, info));
  h.height = static_cast<int>(png_get_image_height(png, info));
  h.bit_depth = png_get_bit_depth(png, info);
  h.color_type = png_get_color_type(png, info);
  stride = png_get_rowbytes(png, info);
  bytes.assign(stride * static_cast<size_t>(h.height), 0);
  rows.resize(static_cast<size_t>(h.height));
  for (int y = 0; y < h.height; ++y) rows[static_cast<size_t>(y)] = bytes.data() + stride * static_cast<size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return h;
}

void write_png_rows(const std::string& path, int width, int height, int bit_depth, int color_type,
                    const std::vector<uint8_t>& bytes, size_t stride) {
  FileCloser f;
  f.fp = std::fopen(path.c_str(), "wb");
  if (!f.fp) fail(ErrorCategory::io, "cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(ErrorCategory::runtime, "libpng allocation failure");
  }
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(bytes.data()) + stride * static_cast<size_t>(y);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCategory::io, "PNG write failure: " + path);
  }
  png_init_io(png, f.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor<float> read_rgb_png(const std::string& path) {
  std::vector<uint8_t> bytes;
  size_t stride = 0;
  PngHeader h = read_png_rows(path, bytes, stride);
  if (h.bit_depth != 8 || h.color_type != PNG_COLOR_TYPE_RGB)
    fail(ErrorCategory::format, "expected 8-bit RGB PNG: " + path);
  Tensor<float> img({3, h.height, h.width}, 0.0f);
  size_t hw = static_cast<size_t>(h.height) * static_cast<size_t>(h.width);
  for (int y = 0; y < h.height; ++y) {
    const uint8_t* row = bytes.data() + stride * static_cast<size_t>(y);
    for (int x = 0; x < h.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.data()[static_cast<size_t>(c) * hw + static_cast<size_t>(y) * h.width + x] =
            static_cast<float>(row[3 * x + c]) / 255.0f;
  }
  return img;
}

void write_rgb_png(const Tensor<float>& image, const std::string& path) {
  if (image.rank() != 3 || image.dim(0) != 3)
    fail(ErrorCategory::shape, "expected a (3,H,W) image, got " + shape_str(image.shape()));
  int H = static_cast<int>(image.dim(1)), W = static_cast<int>(image.dim(2));
  size_t stride = static_cast<size_t>(W) * 3;
  std::vector<uint8_t> bytes(stride * static_cast<size_t>(H));
  size_t hw = static_cast<size_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = image.data()[static_cast<size_t>(c) * hw + static_cast<size_t>(y) * W + x];
        v = std::min(1.0, std::max(0.0, v));
        bytes[stride * static_cast<size_t>(y) + 3 * static_cast<size_t>(x) + static_cast<size_t>(c)] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
  write_png_rows(path, W, H, 8, PNG_COLOR_TYPE_RGB, bytes, stride);
}

DepthMap read_depth_png(const std::string& path) {
  std::vector<uint8_t> bytes;
  size_t stride = 0;
  PngHeader h = read_png_rows(path, bytes, stride);
  if (h.bit_depth != 16 || h.color_type != PNG_COLOR_TYPE_GRAY)
    fail(ErrorCategory::format, "expected 16-bit grayscale depth PNG: " + path);
  DepthMap d;
  d.depth = Tensor<double>({h.height, h.width}, 0.0);
  d.valid = Tensor<double>({h.height, h.width}, 0.0);
  for (int y = 0; y < h.height; ++y) {
    const uint8_t* row = bytes.data() + stride * static_cast<size_t>(y);
    for (int x = 0; x < h.width; ++x) {
      // PNG 16-bit samples are big-endian
      uint32_t v = (static_cast<uint32_t>(row[2 * x]) << 8) | row[2 * x + 1];
      int64_t i = static_cast<int64_t>(y) * h.width + x;
      d.depth[i] = static_cast<double>(v) / 256.0;
      d.valid[i] = v == 0 ? 0.0 : 1.0;
    }
  }
  return d;
}

void write_depth_png(const DepthMap& d, const std::string& path) {
  if (d.depth.rank() != 2 || !same_shape(d.depth.shape(), d.valid.shape()))
    fail(ErrorCategory::shape, "depth map and mask must both be (H,W)");
  int H = static_cast<int>(d.depth.dim(0)), W = static_cast<int>(d.depth.dim(1));
  size_t stride = static_cast<size_t>(W) * 2;
  std::vector<uint8_t> bytes(stride * static_cast<size_t>(H));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int64_t i = static_cast<int64_t>(y) * W + x;
      uint32_t v = 0;
      if (d.valid[i] != 0.0) {
        long enc = std::lround(d.depth[i] * 256.0);
        if (enc > 65535)
          fail(ErrorCategory::format,
               "depth value " + std::to_string(d.depth[i]) + " m exceeds the 16-bit range");
        if (enc <= 0)
          fail(ErrorCategory::format,
               "valid depth value " + std::to_string(d.depth[i]) + " m is below encoding resolution");
        v = static_cast<uint32_t>(enc);
      }
      bytes[stride * static_cast<size_t>(y) + 2 * static_cast<size_t>(x)] = static_cast<uint8_t>(v >> 8);
      bytes[stride * static_cast<size_t>(y) + 2 * static_cast<size_t>(x) + 1] = static_cast<uint8_t>(v & 0xff);
    }
  write_png_rows(path, W, H, 16, PNG_COLOR_TYPE_GRAY, bytes, stride);
}

}  // namespace ecdepth
