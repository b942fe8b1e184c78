#include "ecdepth/losses.hpp"

namespace ecdepth {

namespace {
constexpr double kSsimC1 = 1e-4;
constexpr double kSsimC2 = 9e-4;
// Sentinel photometric error for pixels a view cannot explain; any real pe
// is <= 1 for images in [0,1], so the min never picks it when a valid view
// exists.
constexpr double kInvalidPe = 1e4;

template <typename T>
Var<T> channel_mean(Tape<T>& tape, Var<T> x) {
  return tape.mean(x, {1}, true);
}
}  // namespace

template <typename T>
Var<T> ssim(Tape<T>& tape, Var<T> a, Var<T> b) {
  if (!same_shape(a.shape(), b.shape()))
    fail(ErrorCategory::shape,
         "ssim: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto mu_a = tape.avg_pool3x3_reflect(a);
  auto mu_b = tape.avg_pool3x3_reflect(b);
  auto sigma_a = tape.avg_pool3x3_reflect(tape.square(a)) - tape.square(mu_a);
  auto sigma_b = tape.avg_pool3x3_reflect(tape.square(b)) - tape.square(mu_b);
  auto sigma_ab = tape.avg_pool3x3_reflect(a * b) - mu_a * mu_b;
  auto num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * sigma_ab + kSsimC2);
  auto den = (tape.square(mu_a) + tape.square(mu_b) + kSsimC1) * (sigma_a + sigma_b + kSsimC2);
  return channel_mean(tape, num / den);
}

template <typename T>
Var<T> photometric_error(Tape<T>& tape, Var<T> a, Var<T> b, double theta) {
  auto structural = (1.0 - ssim(tape, a, b)) * (theta / 2.0);
  auto l1 = channel_mean(tape, tape.abs(a - b)) * (1.0 - theta);
  return structural + l1;
}

template <typename T>
ReprojectionLoss<T> reprojection_loss(Tape<T>& tape, Var<T> target,
                                      const std::vector<Var<T>>& views,
                                      const std::vector<Var<T>>& masks, double theta) {
  if (views.empty() || views.size() != masks.size())
    fail(ErrorCategory::shape, "reprojection_loss: need >= 1 view with matching masks");
  Var<T> min_pe;
  Var<T> any_valid;
  for (size_t i = 0; i < views.size(); ++i) {
    auto pe = photometric_error(tape, target, views[i], theta);
    auto masked = pe * masks[i] + kInvalidPe * (1.0 - masks[i]);
    if (i == 0) {
      min_pe = masked;
      any_valid = masks[i];
    } else {
      min_pe = tape.min2(min_pe, masked);
      any_valid = tape.max2(any_valid, masks[i]);
    }
  }
  ReprojectionLoss<T> out;
  out.any_valid = any_valid;
  out.min_map = min_pe * any_valid;
  out.scalar = tape.sum(out.min_map) / tape.sum(any_valid);
  return out;
}

template <typename T>
Var<T> normalized_inverse_depth(Tape<T>& tape, Var<T> depth) {
  auto inv = 1.0 / depth;
  auto m = tape.mean(inv, {1, 2, 3}, true);
  return inv / m;
}

template <typename T>
Var<T> smoothness_loss(Tape<T>& tape, Var<T> depth, Var<T> image) {
  const Shape& ds = depth.shape();
  const Shape& is = image.shape();
  if (ds.size() != 4 || is.size() != 4 || ds[0] != is[0] || ds[2] != is[2] || ds[3] != is[3])
    fail(ErrorCategory::shape,
         "smoothness_loss: depth " + shape_str(ds) + " vs image " + shape_str(is));
  const int N = ds[0], H = ds[2], W = ds[3], C = is[1];
  auto w = normalized_inverse_depth(tape, depth);

  auto dx = [&](Var<T> x, int ch) {
    return tape.slice(x, {0, 0, 0, 1}, {N, ch, H, W - 1}) -
           tape.slice(x, {0, 0, 0, 0}, {N, ch, H, W - 1});
  };
  auto dy = [&](Var<T> x, int ch) {
    return tape.slice(x, {0, 0, 1, 0}, {N, ch, H - 1, W}) -
           tape.slice(x, {0, 0, 0, 0}, {N, ch, H - 1, W});
  };

  auto gx = tape.abs(dx(w, 1)) * tape.exp(-channel_mean(tape, tape.abs(dx(image, C))));
  auto gy = tape.abs(dy(w, 1)) * tape.exp(-channel_mean(tape, tape.abs(dy(image, C))));
  return tape.mean(gx) + tape.mean(gy);
}

template <typename T>
Var<T> consistency_loss(Tape<T>& tape, const std::vector<Var<T>>& depths) {
  if (depths.size() < 2) fail(ErrorCategory::shape, "consistency_loss: need >= 2 depth maps");
  const double K = static_cast<double>(depths.size());
  std::vector<Var<T>> ws;
  ws.reserve(depths.size());
  for (auto d : depths) ws.push_back(normalized_inverse_depth(tape, d));
  Var<T> m = ws[0];
  for (size_t i = 1; i < ws.size(); ++i) m = m + ws[i];
  m = m * (1.0 / K);
  Var<T> acc;
  for (size_t i = 0; i < ws.size(); ++i) {
    auto term = ws[i] * tape.log(ws[i] / m);
    acc = i == 0 ? term : acc + term;
  }
  return tape.mean(acc * (1.0 / K));
}

template <typename T>
Var<T> scale_invariant_loss(Tape<T>& tape, Var<T> a, Var<T> b) {
  auto g = tape.log(a) - tape.log(b);
  return tape.mean(tape.square(g)) - 0.5 * tape.square(tape.mean(g));
}

template <typename T>
Var<T> distillation_loss(Tape<T>& tape, Var<T> teacher, const std::vector<Var<T>>& students,
                         Var<T> mask) {
  if (students.empty()) fail(ErrorCategory::shape, "distillation_loss: need >= 1 student branch");
  Var<T> acc;
  Var<T> one = tape.scalar(T(1));
  auto count = tape.sum(mask);
  // Retained-pixel count is integral, so max(count, 1) leaves real counts
  // untouched and turns the empty-mask case into 0/1 = 0 with no gradient.
  auto safe_count = tape.max2(count, one);
  for (size_t i = 0; i < students.size(); ++i) {
    auto masked = tape.abs(teacher - students[i]) * mask;
    auto term = tape.sum(masked) / safe_count;
    acc = i == 0 ? term : acc + term;
  }
  return acc * (1.0 / static_cast<double>(students.size()));
}

template <typename T>
LossBreakdown<T> stage1_total(Tape<T>& tape, const std::vector<ScaleTerms<T>>& scales,
                              double alpha, double beta) {
  if (scales.empty()) fail(ErrorCategory::shape, "stage1_total: no scales");
  const double inv_n = 1.0 / static_cast<double>(scales.size());
  LossBreakdown<T> out;
  for (size_t s = 0; s < scales.size(); ++s) {
    if (!scales[s].has_c) fail(ErrorCategory::shape, "stage1_total: missing consistency term");
    auto term = scales[s].l_p + alpha * scales[s].l_e + beta * scales[s].l_c;
    out.total = s == 0 ? term : out.total + term;
    out.l_p = s == 0 ? scales[s].l_p : out.l_p + scales[s].l_p;
    out.l_e = s == 0 ? scales[s].l_e : out.l_e + scales[s].l_e;
    out.l_c = s == 0 ? scales[s].l_c : out.l_c + scales[s].l_c;
  }
  out.total = out.total * inv_n;
  out.l_p = out.l_p * inv_n;
  out.l_e = out.l_e * inv_n;
  out.l_c = out.l_c * inv_n;
  out.l_dist = tape.scalar(T(0));
  return out;
}

template <typename T>
LossBreakdown<T> stage2_total(Tape<T>& tape, const std::vector<ScaleTerms<T>>& scales,
                              double alpha, double gamma) {
  if (scales.empty()) fail(ErrorCategory::shape, "stage2_total: no scales");
  const double inv_n = 1.0 / static_cast<double>(scales.size());
  LossBreakdown<T> out;
  for (size_t s = 0; s < scales.size(); ++s) {
    if (!scales[s].has_dist) fail(ErrorCategory::shape, "stage2_total: missing distillation term");
    auto term = scales[s].l_p + alpha * scales[s].l_e + gamma * scales[s].l_dist;
    out.total = s == 0 ? term : out.total + term;
    out.l_p = s == 0 ? scales[s].l_p : out.l_p + scales[s].l_p;
    out.l_e = s == 0 ? scales[s].l_e : out.l_e + scales[s].l_e;
    out.l_dist = s == 0 ? scales[s].l_dist : out.l_dist + scales[s].l_dist;
  }
  out.total = out.total * inv_n;
  out.l_p = out.l_p * inv_n;
  out.l_e = out.l_e * inv_n;
  out.l_dist = out.l_dist * inv_n;
  out.l_c = tape.scalar(T(0));
  return out;
}

#define ECDEPTH_LOSSES_INST(T)                                                             \
  template Var<T> ssim(Tape<T>&, Var<T>, Var<T>);                                          \
  template Var<T> photometric_error(Tape<T>&, Var<T>, Var<T>, double);                     \
  template ReprojectionLoss<T> reprojection_loss(                                          \
      Tape<T>&, Var<T>, const std::vector<Var<T>>&, const std::vector<Var<T>>&, double);   \
  template Var<T> normalized_inverse_depth(Tape<T>&, Var<T>);                              \
  template Var<T> smoothness_loss(Tape<T>&, Var<T>, Var<T>);                               \
  template Var<T> consistency_loss(Tape<T>&, const std::vector<Var<T>>&);                  \
  template Var<T> scale_invariant_loss(Tape<T>&, Var<T>, Var<T>);                          \
  template Var<T> distillation_loss(Tape<T>&, Var<T>, const std::vector<Var<T>>&, Var<T>); \
  template LossBreakdown<T> stage1_total(Tape<T>&, const std::vector<ScaleTerms<T>>&,      \
                                         double, double);                                  \
  template LossBreakdown<T> stage2_total(Tape<T>&, const std::vector<ScaleTerms<T>>&,      \
                                         double, double);
ECDEPTH_LOSSES_INST(float)
ECDEPTH_LOSSES_INST(double)
#undef ECDEPTH_LOSSES_INST

}  // namespace ecdepth
