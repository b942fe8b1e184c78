#pragma once

#include <vector>

#include "ecdepth/tape.hpp"

namespace ecdepth {

// Per-channel structural similarity of two images in [0,1], averaged over
// channels: (N,C,H,W) x2 -> (N,1,H,W). 3x3 mean filter with reflect padding,
// stabilizers C1 = 1e-4, C2 = 9e-4.
template <typename T>
Var<T> ssim(Tape<T>& tape, Var<T> a, Var<T> b);

// theta/2 * (1 - SSIM) + (1 - theta) * channel-mean |a - b|; (N,1,H,W).
template <typename T>
Var<T> photometric_error(Tape<T>& tape, Var<T> a, Var<T> b, double theta = 0.85);

template <typename T>
struct ReprojectionLoss {
  Var<T> scalar;     // mean of the per-pixel minimum over pixels valid somewhere
  Var<T> min_map;    // per-pixel min of pe across views, 0 where no view is valid
  Var<T> any_valid;  // (N,1,H,W) 1 where at least one view is valid
};

// Per-pixel minimum of photometric errors across synthesized views, masked
// mean over pixels covered by at least one view. If every pixel is invalid
// the masked mean divides by zero and evaluate() raises the non-finite
// error, which is the intended signal for broken geometry.
template <typename T>
ReprojectionLoss<T> reprojection_loss(Tape<T>& tape, Var<T> target,
                                      const std::vector<Var<T>>& views,
                                      const std::vector<Var<T>>& masks, double theta = 0.85);

// (1/D) / per-sample-mean(1/D); mean over C,H,W per batch sample.
template <typename T>
Var<T> normalized_inverse_depth(Tape<T>& tape, Var<T> depth);

// Edge-aware first-difference penalty on normalized inverse depth, gated by
// e^{-|dI|} with image gradients averaged over channels.
template <typename T>
Var<T> smoothness_loss(Tape<T>& tape, Var<T> depth, Var<T> image);

// Per-pixel (1/K) sum_i w_i ln(w_i / m) with m = (1/K) sum_j w_j, where w_i
// is normalized inverse depth; mean over pixels. Zero iff all maps agree.
template <typename T>
Var<T> consistency_loss(Tape<T>& tape, const std::vector<Var<T>>& depths);

// mean(g^2) - 0.5 * mean(g)^2 with g = ln(a) - ln(b).
template <typename T>
Var<T> scale_invariant_loss(Tape<T>& tape, Var<T> a, Var<T> b);

// (1/K) sum_i maskedMean(|teacher - student_i| * mask); an all-zero mask
// contributes exactly 0 with no gradient. The caller passes the teacher as a
// constant (or detached) node so no gradient reaches it.
template <typename T>
Var<T> distillation_loss(Tape<T>& tape, Var<T> teacher, const std::vector<Var<T>>& students,
                         Var<T> mask);

template <typename T>
struct ScaleTerms {
  Var<T> l_p;
  Var<T> l_e;
  Var<T> l_c;     // stage 1
  Var<T> l_dist;  // stage 2
  bool has_c = false;
  bool has_dist = false;
};

template <typename T>
struct LossBreakdown {
  Var<T> total;
  Var<T> l_p;  // means over scales
  Var<T> l_e;
  Var<T> l_c;
  Var<T> l_dist;
};

// (1/N) sum_s (L_p + alpha L_e + beta L_c), alpha = beta = 0.001.
template <typename T>
LossBreakdown<T> stage1_total(Tape<T>& tape, const std::vector<ScaleTerms<T>>& scales,
                              double alpha = 0.001, double beta = 0.001);

// (1/N) sum_s (L_p + alpha L_e + gamma L_dist), alpha = 0.001, gamma = 1.
template <typename T>
LossBreakdown<T> stage2_total(Tape<T>& tape, const std::vector<ScaleTerms<T>>& scales,
                              double alpha = 0.001, double gamma = 1.0);

#define ECDEPTH_LOSSES_EXTERN(T)                                                              \
  extern template Var<T> ssim(Tape<T>&, Var<T>, Var<T>);                                      \
  extern template Var<T> photometric_error(Tape<T>&, Var<T>, Var<T>, double);                 \
  extern template ReprojectionLoss<T> reprojection_loss(                                      \
      Tape<T>&, Var<T>, const std::vector<Var<T>>&, const std::vector<Var<T>>&, double);      \
  extern template Var<T> normalized_inverse_depth(Tape<T>&, Var<T>);                          \
  extern template Var<T> smoothness_loss(Tape<T>&, Var<T>, Var<T>);                           \
  extern template Var<T> consistency_loss(Tape<T>&, const std::vector<Var<T>>&);              \
  extern template Var<T> scale_invariant_loss(Tape<T>&, Var<T>, Var<T>);                      \
  extern template Var<T> distillation_loss(Tape<T>&, Var<T>, const std::vector<Var<T>>&,     \
                                           Var<T>);                                           \
  extern template LossBreakdown<T> stage1_total(Tape<T>&, const std::vector<ScaleTerms<T>>&, \
                                                double, double);                              \
  extern template LossBreakdown<T> stage2_total(Tape<T>&, const std::vector<ScaleTerms<T>>&, \
                                                double, double);
ECDEPTH_LOSSES_EXTERN(float)
ECDEPTH_LOSSES_EXTERN(double)
#undef ECDEPTH_LOSSES_EXTERN

}  // namespace ecdepth
