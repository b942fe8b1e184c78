#pragma once

#include <string>

#include "ecdepth/tape.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

// 16-member corruption catalogue; the frost and jpeg kinds of the common
// benchmark are omitted (external texture / codec dependencies).
enum class CorruptionKind {
  gaussian_noise,
  shot_noise,
  impulse_noise,
  defocus_blur,
  glass_blur,
  motion_blur,
  zoom_blur,
  gaussian_blur,
  snow,
  fog,
  spatter,
  brightness,
  contrast,
  saturate,
  elastic_transform,
  pixelate,
};
inline constexpr int kNumCorruptionKinds = 16;

const char* to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(const std::string& name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;  // 1..5
  uint64_t seed = 0;
};

struct JitterSpec {
  double brightness = 0;  // additive, [-0.2, 0.2]
  double contrast = 0;    // multiplicative about the per-image mean, [-0.2, 0.2]
  double saturation = 0;  // multiplicative about per-pixel luma, [-0.2, 0.2]
  double hue = 0;         // rotation in turns, [-0.05, 0.05]
  uint64_t seed = 0;
};

// Uniform draw of jitter deltas within the declared ranges.
JitterSpec draw_jitter(uint64_t seed);

// Images are (3,H,W) in [0,1]. Both functions clamp to [0,1] at the end and
// are pure functions of (image, spec).
Tensor<float> weak_perturb(const Tensor<float>& image, const JitterSpec& spec);
Tensor<float> apply_corruption(const Tensor<float>& image, const CorruptionSpec& spec);

struct Triplet {
  Tensor<float> weak, strong1, strong2;
  JitterSpec jitter;
  CorruptionSpec spec1, spec2;
};
// One weak view plus two independently drawn corruptions of the same image;
// kinds uniform over the catalogue, severities uniform over 1..5.
Triplet make_triplet(const Tensor<float>& image, uint64_t seed);

// Embedded copy of the severity constants file; the checked-in text file
// must match byte for byte (golden test).
const std::string& severity_table_text();

// Channel dropout on a tape feature map (inverted scaling).
template <typename T>
Var<T> feature_dropout(Tape<T>& tape, Var<T> features, double keep_prob, uint64_t seed) {
  return tape.channel_dropout(features, keep_prob, seed);
}

}  // namespace ecdepth
