#pragma once

#include <string>
#include <vector>

#include "ecdepth/checkpoint.hpp"
#include "ecdepth/config.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

struct StepLog {
  int64_t step = 0;  // 0-based; the row is written after the update
  int epoch = 0;
  double lr = 0;  // decoder-group rate in effect
  double l_p = 0, l_e = 0, l_c = 0, l_dist = 0;
  double retention = 0;  // mean kept fraction of the stage-2 filter mask; 1 in stage 1
};

// Header `step,epoch,lr,L_p,L_e,L_c,L_dist,retention`, one row per step, LF.
std::string run_log_csv(const std::vector<StepLog>& log);

// Fresh random initialization: student parameters, zeroed optimizer moments,
// step 0 (plus a teacher copy when cfg.stage == 2).
Checkpoint init_checkpoint(const TrainConfig& cfg);

// Stage-2 start state from a stage-1 result: student carried over, teacher
// initialized as a copy, optimizer reset, step 0.
Checkpoint promote_to_stage2(const Checkpoint& stage1, const TrainConfig& cfg);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
};

// Runs the configured stage from `start` until epochs (or max_steps) are
// exhausted; continuing a half-done checkpoint replays the remaining steps
// exactly. With a nonempty out_dir, writes checkpoint.bin and run_log.csv
// there, plus checkpoint_<step>.bin snapshots every checkpoint_every steps.
TrainResult train(const TrainConfig& cfg, const Checkpoint& start,
                  const std::string& out_dir = "");

// Student depth at the finest scale, dropout disabled. The image must be
// (3, cfg.height, cfg.width); returns (H, W) meters in [0.1, 100].
Tensor<double> infer_depth(const Checkpoint& ckpt, const Tensor<float>& image);

// Resolution-tolerant wrapper: resizes the input to the configured
// resolution, infers, and resizes the depth map back.
Tensor<double> infer_depth_at(const Checkpoint& ckpt, const Tensor<float>& image);

}  // namespace ecdepth
