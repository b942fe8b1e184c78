#pragma once

#include <vector>

#include "ecdepth/network.hpp"
#include "ecdepth/tape.hpp"

namespace ecdepth {

// Teacher side of the mean-teacher pair: same manifest as the student,
// advanced once per optimizer step by an exponential moving average.
template <typename T>
struct TeacherState {
  ParamMap<T> params;
  uint64_t update_count = 0;
};

// teacher <- m * teacher + (1 - m) * student, array by array.
template <typename T>
void ema_update(ParamMap<T>& teacher, const ParamMap<T>& student, double momentum);

// Geometric-consistency mask (1 keeps a pixel): min over views of the
// teacher's reprojection pe must be strictly below delta_g, and the pixel
// must be valid in at least one view.
template <typename T>
Var<T> gc_filter(Tape<T>& tape, Var<T> target, const std::vector<Var<T>>& views,
                 const std::vector<Var<T>>& masks, double delta_g);

// Depth-consistency mask: both strong-branch teacher depths must agree with
// the weak-branch teacher depth within delta_d in normalized-inverse-depth
// space (strict inequality).
template <typename T>
Var<T> dc_filter(Tape<T>& tape, Var<T> d_weak, Var<T> d_s1, Var<T> d_s2, double delta_d);

#define ECDEPTH_DISTILL_EXTERN(T)                                                      \
  extern template void ema_update(ParamMap<T>&, const ParamMap<T>&, double);           \
  extern template Var<T> gc_filter(Tape<T>&, Var<T>, const std::vector<Var<T>>&,       \
                                   const std::vector<Var<T>>&, double);                \
  extern template Var<T> dc_filter(Tape<T>&, Var<T>, Var<T>, Var<T>, double);
ECDEPTH_DISTILL_EXTERN(float)
ECDEPTH_DISTILL_EXTERN(double)
#undef ECDEPTH_DISTILL_EXTERN

}  // namespace ecdepth
