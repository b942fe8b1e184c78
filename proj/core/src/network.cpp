#include "ecdepth/network.hpp"

#include "ecdepth/rng.hpp"

namespace ecdepth {

namespace {

// "tiny": 4-stage strided encoder, skip-connected decoder, disparity heads
// at 4 scales; pose encoder of the same shape on 6 input channels with a
// global-average 1x1 head.
struct ConvSpec {
  const char* name;
  int co, ci, k;
};
constexpr ConvSpec kTinyLayers[] = {
    {"depth.enc1", 16, 3, 3},   {"depth.enc2", 32, 16, 3}, {"depth.enc3", 64, 32, 3},
    {"depth.enc4", 128, 64, 3}, {"depth.dec4", 64, 128, 3}, {"depth.dec3", 48, 128, 3},
    {"depth.head3", 1, 48, 3},  {"depth.dec2", 32, 80, 3}, {"depth.head2", 1, 32, 3},
    {"depth.dec1", 16, 48, 3},  {"depth.head1", 1, 16, 3}, {"depth.dec0", 16, 16, 3},
    {"depth.head0", 1, 16, 3},  {"pose.enc1", 16, 6, 3},   {"pose.enc2", 32, 16, 3},
    {"pose.enc3", 64, 32, 3},   {"pose.enc4", 128, 64, 3}, {"pose.head", 6, 128, 1},
};

}  // namespace

std::vector<std::pair<std::string, Shape>> layer_manifest(const std::string& preset) {
  if (preset != "tiny") fail(ErrorCategory::data, "unknown architecture preset: " + preset);
  std::vector<std::pair<std::string, Shape>> out;
  for (const auto& l : kTinyLayers) {
    out.emplace_back(std::string(l.name) + ".w", Shape{l.co, l.ci, l.k, l.k});
    out.emplace_back(std::string(l.name) + ".b", Shape{l.co});
  }
  return out;
}

template <typename T>
ParamMap<T> init_params(const std::string& preset, uint64_t seed) {
  auto manifest = layer_manifest(preset);
  ParamMap<T> out;
  uint64_t index = 0;
  for (const auto& [name, shape] : manifest) {
    Tensor<T> v(shape);
    bool is_weight = name.size() > 2 && name.substr(name.size() - 2) == ".w";
    bool pose_head = name.rfind("pose.head", 0) == 0;
    if (is_weight && !pose_head) {
      int64_t fan_in = 1;
      for (size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      Rng rng(Rng::derive(seed, "param-init", index));
      for (int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(rng.normal() * std_dev);
    }
    // biases and the pose head stay zero
    out.emplace(name, std::move(v));
    ++index;
  }
  return out;
}

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamMap<T>& params, bool trainable) {
  BoundParams<T> out;
  for (const auto& [name, value] : params) {
    if (trainable) {
      Var<T> v = tape.leaf(name, value.shape());
      tape.bind(name, value);
      out.vars.emplace(name, v);
    } else {
      out.vars.emplace(name, tape.constant(value));
    }
  }
  return out;
}

namespace {

template <typename T>
Var<T> conv_block(Tape<T>& tape, const BoundParams<T>& p, const std::string& layer, Var<T> x,
                  int stride) {
  auto y = tape.conv2d(x, p.at(layer + ".w"), p.at(layer + ".b"), stride, 1);
  return tape.elu(y);
}

template <typename T>
Var<T> disp_head(Tape<T>& tape, const BoundParams<T>& p, const std::string& layer, Var<T> x) {
  return tape.sigmoid(tape.conv2d(x, p.at(layer + ".w"), p.at(layer + ".b"), 1, 1));
}

// Decoder shared by the clean and feature-perturbed branches.
template <typename T>
std::array<Var<T>, 4> run_decoder(Tape<T>& tape, const BoundParams<T>& p, Var<T> e4, Var<T> e3,
                                  Var<T> e2, Var<T> e1) {
  std::array<Var<T>, 4> disp;
  auto x = conv_block(tape, p, "depth.dec4", e4, 1);
  x = tape.upsample_nearest2x(x);
  x = conv_block(tape, p, "depth.dec3", tape.concat({x, e3}, 1), 1);
  disp[3] = disp_head(tape, p, "depth.head3", x);
  x = tape.upsample_nearest2x(x);
  x = conv_block(tape, p, "depth.dec2", tape.concat({x, e2}, 1), 1);
  disp[2] = disp_head(tape, p, "depth.head2", x);
  x = tape.upsample_nearest2x(x);
  x = conv_block(tape, p, "depth.dec1", tape.concat({x, e1}, 1), 1);
  disp[1] = disp_head(tape, p, "depth.head1", x);
  x = tape.upsample_nearest2x(x);
  x = conv_block(tape, p, "depth.dec0", x, 1);
  disp[0] = disp_head(tape, p, "depth.head0", x);
  return disp;
}

}  // namespace

template <typename T>
DepthOutputs<T> depth_forward(Tape<T>& tape, const BoundParams<T>& params, Var<T> image,
                              std::optional<FeaturePerturbation> fp) {
  const Shape& is = image.shape();
  if (is.size() != 4 || is[1] != 3 || is[2] % 16 != 0 || is[3] % 16 != 0 || is[2] < 32 ||
      is[3] < 32)
    fail(ErrorCategory::shape,
         "depth_forward: image must be (N,3,H,W) with H,W multiples of 16 and >= 32, got " +
             shape_str(is));
  auto e1 = conv_block(tape, params, "depth.enc1", image, 2);
  auto e2 = conv_block(tape, params, "depth.enc2", e1, 2);
  auto e3 = conv_block(tape, params, "depth.enc3", e2, 2);
  auto e4 = conv_block(tape, params, "depth.enc4", e3, 2);

  DepthOutputs<T> out;
  out.deepest_feature = e4;
  out.disp = run_decoder(tape, params, e4, e3, e2, e1);
  if (fp.has_value()) {
    auto e4p = tape.channel_dropout(e4, fp->keep_prob, fp->seed);
    out.disp_fp = run_decoder(tape, params, e4p, e3, e2, e1);
    out.has_fp = true;
  }
  return out;
}

template <typename T>
Var<T> pose_forward(Tape<T>& tape, const BoundParams<T>& params, Var<T> img_a, Var<T> img_b) {
  if (!same_shape(img_a.shape(), img_b.shape()))
    fail(ErrorCategory::shape, "pose_forward: frame shapes differ");
  auto x = tape.concat({img_a, img_b}, 1);
  x = conv_block(tape, params, "pose.enc1", x, 2);
  x = conv_block(tape, params, "pose.enc2", x, 2);
  x = conv_block(tape, params, "pose.enc3", x, 2);
  x = conv_block(tape, params, "pose.enc4", x, 2);
  auto pooled = tape.mean(x, {2, 3}, true);
  auto head = tape.conv2d(pooled, params.at("pose.head.w"), params.at("pose.head.b"), 1, 0);
  const int n = img_a.shape()[0];
  return tape.reshape(head * 0.01, {n, 6});
}

template <typename T>
Var<T> disparity_to_depth(Tape<T>& tape, Var<T> disp, double d_min, double d_max) {
  (void)tape;
  return 1.0 / (1.0 / d_max + (1.0 / d_min - 1.0 / d_max) * disp);
}

double disparity_to_depth(double disp, double d_min, double d_max) {
  return 1.0 / (1.0 / d_max + (1.0 / d_min - 1.0 / d_max) * disp);
}

#define ECDEPTH_NETWORK_INST(T)                                                          \
  template ParamMap<T> init_params(const std::string&, uint64_t);                        \
  template BoundParams<T> bind_params(Tape<T>&, const ParamMap<T>&, bool);               \
  template DepthOutputs<T> depth_forward(Tape<T>&, const BoundParams<T>&, Var<T>,        \
                                         std::optional<FeaturePerturbation>);            \
  template Var<T> pose_forward(Tape<T>&, const BoundParams<T>&, Var<T>, Var<T>);         \
  template Var<T> disparity_to_depth(Tape<T>&, Var<T>, double, double);
ECDEPTH_NETWORK_INST(float)
ECDEPTH_NETWORK_INST(double)
#undef ECDEPTH_NETWORK_INST

}  // namespace ecdepth
