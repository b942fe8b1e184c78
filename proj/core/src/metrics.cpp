#include "ecdepth/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ecdepth/error.hpp"

namespace ecdepth {

namespace {

double median_of(std::vector<double> v) {
  size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

MetricsRecord compute_metrics(const Tensor<double>& pred, const Tensor<double>& gt,
                              const Tensor<double>& valid, bool median_scaling, double cap,
                              bool eigen_crop) {
  if (!same_shape(pred.shape(), gt.shape()) || !same_shape(pred.shape(), valid.shape()))
    fail(ErrorCategory::shape, "compute_metrics: pred/gt/valid shapes differ: " +
                                   shape_str(pred.shape()) + " " + shape_str(gt.shape()) + " " +
                                   shape_str(valid.shape()));
  if (cap <= 1e-3) fail(ErrorCategory::usage, "compute_metrics: cap must exceed 1e-3");
  if (eigen_crop && pred.shape().size() != 2)
    fail(ErrorCategory::shape, "compute_metrics: eigen_crop needs (H,W) maps, got " +
                                   shape_str(pred.shape()));
  int64_t crop_w = 0, r0 = 0, r1 = 0, c0 = 0, c1 = 0;
  if (eigen_crop) {
    int64_t h = pred.shape()[0], w = pred.shape()[1];
    crop_w = w;
    r0 = static_cast<int64_t>(0.40810811 * static_cast<double>(h));
    r1 = static_cast<int64_t>(0.99189189 * static_cast<double>(h));
    c0 = static_cast<int64_t>(0.03594771 * static_cast<double>(w));
    c1 = static_cast<int64_t>(0.96405229 * static_cast<double>(w));
  }

  std::vector<double> p, g;
  for (int64_t i = 0; i < pred.size(); ++i) {
    if (valid[i] == 0.0) continue;
    if (eigen_crop) {
      int64_t row = i / crop_w, col = i % crop_w;
      if (row < r0 || row >= r1 || col < c0 || col >= c1) continue;
    }
    if (!(pred[i] > 0.0) || !std::isfinite(pred[i]))
      fail(ErrorCategory::numeric, "compute_metrics: non-positive or non-finite prediction");
    if (!(gt[i] > 0.0) || !std::isfinite(gt[i]))
      fail(ErrorCategory::data, "compute_metrics: non-positive or non-finite ground truth");
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  if (p.empty()) fail(ErrorCategory::data, "compute_metrics: no valid ground-truth pixels");

  double scale = 1.0;
  if (median_scaling) scale = median_of(g) / median_of(p);

  MetricsRecord r;
  r.pixels = static_cast<int64_t>(p.size());
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  int64_t n1 = 0, n2 = 0, n3 = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    double d = std::clamp(p[i] * scale, 1e-3, cap);
    double ds = std::clamp(g[i], 1e-3, cap);
    double diff = d - ds;
    r.abs_rel += std::fabs(diff) / ds;
    r.sq_rel += diff * diff / ds;
    r.rmse += diff * diff;
    double dl = std::log(d) - std::log(ds);
    r.rmse_log += dl * dl;
    double ratio = std::max(d / ds, ds / d);
    n1 += ratio < t1;
    n2 += ratio < t2;
    n3 += ratio < t3;
  }
  double n = static_cast<double>(p.size());
  r.abs_rel /= n;
  r.sq_rel /= n;
  r.rmse = std::sqrt(r.rmse / n);
  r.rmse_log = std::sqrt(r.rmse_log / n);
  r.a1 = static_cast<double>(n1) / n;
  r.a2 = static_cast<double>(n2) / n;
  r.a3 = static_cast<double>(n3) / n;
  return r;
}

MetricsRecord mean_records(const std::vector<MetricsRecord>& records) {
  if (records.empty()) fail(ErrorCategory::usage, "mean_records: empty input");
  MetricsRecord m;
  for (const auto& r : records) {
    m.abs_rel += r.abs_rel;
    m.sq_rel += r.sq_rel;
    m.rmse += r.rmse;
    m.rmse_log += r.rmse_log;
    m.a1 += r.a1;
    m.a2 += r.a2;
    m.a3 += r.a3;
    m.pixels += r.pixels;
  }
  double n = static_cast<double>(records.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse /= n;
  m.rmse_log /= n;
  m.a1 /= n;
  m.a2 /= n;
  m.a3 /= n;
  return m;
}

}  // namespace ecdepth
