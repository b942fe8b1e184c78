#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ecdepth/metrics.hpp"
#include "ecdepth/perturb.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

// Maps an RGB image (3,H,W) in [0,1] to a depth map (H,W) in meters.
using InferFn = std::function<Tensor<double>(const Tensor<float>&)>;

struct CorruptionCell {
  CorruptionKind kind;
  int severity;
  MetricsRecord metrics;  // mean over images
  int n_images = 0;
};

struct BenchmarkReport {
  MetricsRecord clean;  // uncorrupted pass
  int n_images = 0;
  std::vector<CorruptionCell> cells;
};

// Runs `infer` on every ground-truth frame of every sequence under `root`,
// once clean and once per requested (kind, severity 1..5) with frames
// corrupted deterministically from `seed`. Metrics per cell are the mean of
// per-image records.
BenchmarkReport run_corruption_benchmark(const std::string& root, const InferFn& infer,
                                         const std::vector<CorruptionKind>& kinds, uint64_t seed,
                                         bool median_scaling = true, double cap = 80.0);

// Mean over all corruption cells; errors if the report has none.
MetricsRecord report_average(const BenchmarkReport& report);

// CSV: header, one row per cell (catalogue order, severity ascending), then
// `clean,-`, then `average,-` when cells exist. LF line endings.
std::string benchmark_csv(const BenchmarkReport& report);
void write_benchmark_csv(const BenchmarkReport& report, const std::string& path);

}  // namespace ecdepth
