#include "ecdepth/optimizer.hpp"

#include <cmath>

#include "ecdepth/error.hpp"

namespace ecdepth {

AdamWState init_adamw(const ParamMap<float>& params) {
  AdamWState s;
  for (const auto& [name, t] : params) {
    s.m.emplace(name, Tensor<float>(t.shape()));
    s.v.emplace(name, Tensor<float>(t.shape()));
  }
  return s;
}

bool is_encoder_param(const std::string& name) {
  return name.rfind("depth.enc", 0) == 0 || name.rfind("pose.enc", 0) == 0;
}

void adamw_step(ParamMap<float>& params, const std::map<std::string, Tensor<float>>& grads,
                AdamWState& state, double lr_encoder, double lr_decoder, double weight_decay) {
  if (grads.size() != params.size())
    fail(ErrorCategory::shape, "optimizer: gradient set does not match parameter set");
  state.t += 1;
  double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) fail(ErrorCategory::shape, "optimizer: no gradient for " + name);
    const Tensor<float>& g = git->second;
    if (!same_shape(g.shape(), p.shape()))
      fail(ErrorCategory::shape, "optimizer: gradient shape mismatch for " + name);
    if (!g.all_finite())
      fail(ErrorCategory::numeric, "optimizer: non-finite gradient in " + name);
    Tensor<float>& m = state.m.at(name);
    Tensor<float>& v = state.v.at(name);
    double lr = is_encoder_param(name) ? lr_encoder : lr_decoder;
    for (int64_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      double mi = kAdamBeta1 * static_cast<double>(m[i]) + (1.0 - kAdamBeta1) * gi;
      double vi = kAdamBeta2 * static_cast<double>(v[i]) + (1.0 - kAdamBeta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double mhat = static_cast<double>(m[i]) / bc1;
      double vhat = static_cast<double>(v[i]) / bc2;
      double pd = static_cast<double>(p[i]);
      pd -= lr * weight_decay * pd;
      pd -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
      p[i] = static_cast<float>(pd);
    }
  }
}

}  // namespace ecdepth
