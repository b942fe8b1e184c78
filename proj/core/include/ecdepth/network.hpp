#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecdepth/tape.hpp"

namespace ecdepth {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

// Closed list of (name, shape) for one architecture preset; checkpoints and
// optimizer state are validated against it. Only "tiny" is registered.
std::vector<std::pair<std::string, Shape>> layer_manifest(const std::string& preset);

// Fan-in-scaled normal init (std = sqrt(2/fan_in)), zero biases, pose head
// fully zero so the initial pose is the identity. Deterministic in `seed`.
template <typename T>
ParamMap<T> init_params(const std::string& preset, uint64_t seed);

// Parameters entered on a tape: as named leaves (trainable, gradients keyed
// by parameter name) or as constants (teacher, gradient-blocked).
template <typename T>
struct BoundParams {
  std::map<std::string, Var<T>> vars;
  Var<T> at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) fail(ErrorCategory::shape, "unknown parameter: " + name);
    return it->second;
  }
};
template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamMap<T>& params, bool trainable);

struct FeaturePerturbation {
  double keep_prob = 0.75;
  uint64_t seed = 0;
};

template <typename T>
struct DepthOutputs {
  // Sigmoid disparities, scale s at (H/2^s, W/2^s); index 0 is full
  // resolution.
  std::array<Var<T>, 4> disp;
  // Same decoder run on the dropout-perturbed deepest feature.
  std::array<Var<T>, 4> disp_fp;
  bool has_fp = false;
  Var<T> deepest_feature;  // pre-perturbation encoder output
};

// Input (N,3,H,W) with H, W divisible by 16.
template <typename T>
DepthOutputs<T> depth_forward(Tape<T>& tape, const BoundParams<T>& params, Var<T> image,
                              std::optional<FeaturePerturbation> fp = std::nullopt);

// Concatenated frame pair -> 6 numbers per sample (axis-angle xyz then
// translation xyz), raw head output scaled by 0.01. Shape (N,6).
template <typename T>
Var<T> pose_forward(Tape<T>& tape, const BoundParams<T>& params, Var<T> img_a, Var<T> img_b);

inline constexpr double kDepthMin = 0.1;
inline constexpr double kDepthMax = 100.0;

// depth = 1 / (1/d_max + (1/d_min - 1/d_max) * disp); maps (0,1) onto
// (d_min, d_max), strictly decreasing.
template <typename T>
Var<T> disparity_to_depth(Tape<T>& tape, Var<T> disp, double d_min = kDepthMin,
                          double d_max = kDepthMax);
double disparity_to_depth(double disp, double d_min = kDepthMin, double d_max = kDepthMax);

#define ECDEPTH_NETWORK_EXTERN(T)                                                            \
  extern template ParamMap<T> init_params(const std::string&, uint64_t);                     \
  extern template BoundParams<T> bind_params(Tape<T>&, const ParamMap<T>&, bool);            \
  extern template DepthOutputs<T> depth_forward(Tape<T>&, const BoundParams<T>&, Var<T>,     \
                                                std::optional<FeaturePerturbation>);         \
  extern template Var<T> pose_forward(Tape<T>&, const BoundParams<T>&, Var<T>, Var<T>);      \
  extern template Var<T> disparity_to_depth(Tape<T>&, Var<T>, double, double);
ECDEPTH_NETWORK_EXTERN(float)
ECDEPTH_NETWORK_EXTERN(double)
#undef ECDEPTH_NETWORK_EXTERN

}  // namespace ecdepth
