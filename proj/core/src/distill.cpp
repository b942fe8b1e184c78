#include "ecdepth/distill.hpp"

#include "ecdepth/losses.hpp"

namespace ecdepth {

template <typename T>
void ema_update(ParamMap<T>& teacher, const ParamMap<T>& student, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0))
    fail(ErrorCategory::data, "ema_update: momentum must lie in [0,1]");
  if (teacher.size() != student.size())
    fail(ErrorCategory::shape, "ema_update: parameter manifests differ in size");
  const T m = static_cast<T>(momentum);
  auto ti = teacher.begin();
  auto si = student.begin();
  for (; ti != teacher.end(); ++ti, ++si) {
    if (ti->first != si->first || !same_shape(ti->second.shape(), si->second.shape()))
      fail(ErrorCategory::shape, "ema_update: manifest mismatch at " + ti->first);
    T* tv = ti->second.data();
    const T* sv = si->second.data();
    const int64_t count = ti->second.size();
    for (int64_t i = 0; i < count; ++i) tv[i] = m * tv[i] + (T(1) - m) * sv[i];
  }
}

template <typename T>
Var<T> gc_filter(Tape<T>& tape, Var<T> target, const std::vector<Var<T>>& views,
                 const std::vector<Var<T>>& masks, double delta_g) {
  if (!(delta_g > 0)) fail(ErrorCategory::data, "gc_filter: threshold must be positive");
  if (views.empty() || views.size() != masks.size())
    fail(ErrorCategory::shape, "gc_filter: need >= 1 view with matching masks");
  // Invalid pixels carry a sentinel far above any real pe, so the final
  // strict comparison rejects pixels no view can explain.
  constexpr double kInvalidPe = 1e4;
  Var<T> min_pe;
  for (size_t i = 0; i < views.size(); ++i) {
    auto pe = photometric_error(tape, target, views[i]);
    auto masked = pe * masks[i] + kInvalidPe * (1.0 - masks[i]);
    min_pe = i == 0 ? masked : tape.min2(min_pe, masked);
  }
  return tape.cmp(min_pe, CmpMode::lt, delta_g);
}

template <typename T>
Var<T> dc_filter(Tape<T>& tape, Var<T> d_weak, Var<T> d_s1, Var<T> d_s2, double delta_d) {
  if (!(delta_d > 0)) fail(ErrorCategory::data, "dc_filter: threshold must be positive");
  auto w_weak = normalized_inverse_depth(tape, d_weak);
  auto m1 = tape.cmp(tape.abs(normalized_inverse_depth(tape, d_s1) - w_weak), CmpMode::lt, delta_d);
  auto m2 = tape.cmp(tape.abs(normalized_inverse_depth(tape, d_s2) - w_weak), CmpMode::lt, delta_d);
  return m1 * m2;
}

#define ECDEPTH_DISTILL_INST(T)                                                 \
  template void ema_update(ParamMap<T>&, const ParamMap<T>&, double);           \
  template Var<T> gc_filter(Tape<T>&, Var<T>, const std::vector<Var<T>>&,       \
                            const std::vector<Var<T>>&, double);                \
  template Var<T> dc_filter(Tape<T>&, Var<T>, Var<T>, Var<T>, double);
ECDEPTH_DISTILL_INST(float)
ECDEPTH_DISTILL_INST(double)
#undef ECDEPTH_DISTILL_INST

}  // namespace ecdepth
