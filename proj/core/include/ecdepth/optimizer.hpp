#pragma once

#include <map>
#include <string>

#include "ecdepth/network.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

// Decoupled-weight-decay adaptive-moment optimizer state. Moments are stored
// in training precision so checkpoints round-trip bit-exactly.
struct AdamWState {
  std::map<std::string, Tensor<float>> m, v;
  uint64_t t = 0;  // completed steps
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

AdamWState init_adamw(const ParamMap<float>& params);

// Learning-rate split: encoder arrays (names starting with "depth.enc" or
// "pose.enc") use lr_encoder, the rest lr_decoder.
bool is_encoder_param(const std::string& name);

// One bias-corrected update. Decay is decoupled (applied directly to the
// parameter, scaled by its learning rate). `grads` must cover exactly the
// parameter set; any non-finite gradient aborts, naming the array.
void adamw_step(ParamMap<float>& params, const std::map<std::string, Tensor<float>>& grads,
                AdamWState& state, double lr_encoder, double lr_decoder, double weight_decay);

}  // namespace ecdepth
