#pragma once

#include <vector>

#include "ecdepth/tensor.hpp"

namespace ecdepth {

// Standard depth-estimation error statistics over the valid pixels of one
// image (or averaged over many).
struct MetricsRecord {
  double abs_rel = 0;   // mean |d - d*| / d*
  double sq_rel = 0;    // mean (d - d*)^2 / d*
  double rmse = 0;      // sqrt(mean (d - d*)^2)
  double rmse_log = 0;  // sqrt(mean (ln d - ln d*)^2)
  double a1 = 0, a2 = 0, a3 = 0;  // fraction with max(d/d*, d*/d) < 1.25^k
  int64_t pixels = 0;
};

// pred and gt are (H,W); valid is (H,W) with nonzero marking usable gt.
// With median_scaling, pred is multiplied by median(gt)/median(pred) first.
// Both maps are then clamped to [1e-3, cap] meters. Zero valid pixels is an
// error. With eigen_crop, evaluation is restricted to the conventional
// road-scene crop box (rows 40.8%..99.2%, cols 3.6%..96.4%); requires rank-2
// maps.
MetricsRecord compute_metrics(const Tensor<double>& pred, const Tensor<double>& gt,
                              const Tensor<double>& valid, bool median_scaling = true,
                              double cap = 80.0, bool eigen_crop = false);

// Field-wise arithmetic mean; pixel counts are summed. Empty input is an error.
MetricsRecord mean_records(const std::vector<MetricsRecord>& records);

}  // namespace ecdepth
