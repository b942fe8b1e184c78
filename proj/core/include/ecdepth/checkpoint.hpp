#pragma once

#include <map>
#include <string>

#include "ecdepth/config.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

// Trained-state container. Array names are namespaced: student.<param>,
// teacher.<param> (stage 2 only), opt.m.<param> / opt.v.<param> for the
// optimizer moments.
struct Checkpoint {
  TrainConfig config;
  uint64_t step = 0;
  std::map<std::string, Tensor<float>> arrays;
};

// Binary layout (little-endian): magic "ECDPCKPT", u32 version (1), u32
// config length + UTF-8 config snapshot, u64 step, u32 array count, then per
// array: u32 name length + name, u8 rank, u32 dims, raw f32 data. Bit-exact
// round trip; trailing bytes are a format error.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Human-readable manifest: step, config, then one line per array with shape
// and byte size.
std::string describe_checkpoint(const Checkpoint& ckpt);

}  // namespace ecdepth
