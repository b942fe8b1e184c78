#include "ecdepth/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "ecdepth/dataset.hpp"
#include "ecdepth/error.hpp"
#include "ecdepth/rng.hpp"

namespace ecdepth {

namespace {

struct EvalItem {
  EvalFrame frame;
  int image_index = 0;  // position in the global sorted enumeration
};

std::vector<EvalItem> collect_gt_frames(const std::string& root) {
  std::vector<EvalItem> items;
  int next_index = 0;
  for (const std::string& seq : list_kitti_sequences(root)) {
    for (int idx : list_kitti_frames(root, seq)) {
      EvalFrame f = load_kitti_frame(root, seq, idx);
      int pos = next_index++;
      if (!f.has_gt_depth) continue;
      items.push_back({std::move(f), pos});
    }
  }
  if (items.empty()) fail(ErrorCategory::data, "no ground-truth frames under " + root);
  return items;
}

std::string format_row(const std::string& kind, const std::string& severity,
                       int n_images, const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                kind.c_str(), severity.c_str(), n_images, r.abs_rel, r.sq_rel, r.rmse,
                r.rmse_log, r.a1, r.a2, r.a3);
  return buf;
}

}  // namespace

BenchmarkReport run_corruption_benchmark(const std::string& root, const InferFn& infer,
                                         const std::vector<CorruptionKind>& kinds, uint64_t seed,
                                         bool median_scaling, double cap) {
  std::vector<EvalItem> items = collect_gt_frames(root);

  // canonical catalogue order, duplicates dropped
  std::vector<CorruptionKind> order = kinds;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  BenchmarkReport report;
  report.n_images = static_cast<int>(items.size());

  std::vector<MetricsRecord> recs;
  recs.reserve(items.size());
  for (const EvalItem& it : items) {
    Tensor<double> pred = infer(it.frame.image);
    recs.push_back(compute_metrics(pred, it.frame.gt_depth.depth, it.frame.gt_depth.valid,
                                   median_scaling, cap));
  }
  report.clean = mean_records(recs);

  for (CorruptionKind kind : order) {
    int kind_idx = static_cast<int>(kind);
    for (int severity = 1; severity <= 5; ++severity) {
      recs.clear();
      for (const EvalItem& it : items) {
        CorruptionSpec spec;
        spec.kind = kind;
        spec.severity = severity;
        spec.seed = Rng::derive(seed, "eval", static_cast<uint64_t>(kind_idx * 6 + severity),
                                static_cast<uint64_t>(it.image_index));
        try {
          Tensor<float> corrupted = apply_corruption(it.frame.image, spec);
          Tensor<double> pred = infer(corrupted);
          recs.push_back(compute_metrics(pred, it.frame.gt_depth.depth, it.frame.gt_depth.valid,
                                         median_scaling, cap));
        } catch (const Error& e) {
          fail(e.category(), std::string(to_string(kind)) + " severity " +
                                 std::to_string(severity) + " image " +
                                 std::to_string(it.image_index) + ": " + e.what());
        }
      }
      CorruptionCell cell;
      cell.kind = kind;
      cell.severity = severity;
      cell.metrics = mean_records(recs);
      cell.n_images = static_cast<int>(items.size());
      report.cells.push_back(cell);
    }
  }
  return report;
}

MetricsRecord report_average(const BenchmarkReport& report) {
  if (report.cells.empty()) fail(ErrorCategory::usage, "benchmark report has no corruption cells");
  std::vector<MetricsRecord> recs;
  recs.reserve(report.cells.size());
  for (const CorruptionCell& c : report.cells) recs.push_back(c.metrics);
  return mean_records(recs);
}

std::string benchmark_csv(const BenchmarkReport& report) {
  std::string out = "corruption,severity,n_images,absrel,sqrel,rmse,rmsl,a1,a2,a3\n";
  int total = 0;
  for (const CorruptionCell& c : report.cells) {
    out += format_row(to_string(c.kind), std::to_string(c.severity), c.n_images, c.metrics);
    total += c.n_images;
  }
  out += format_row("clean", "-", report.n_images, report.clean);
  if (!report.cells.empty()) out += format_row("average", "-", total, report_average(report));
  return out;
}

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCategory::io, "cannot open " + path + " for writing");
  std::string text = benchmark_csv(report);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) fail(ErrorCategory::io, "failed writing " + path);
}

}  // namespace ecdepth
