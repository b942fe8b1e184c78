#pragma once

#include <cstdint>
#include <string>

namespace ecdepth {

// Flat `key = value` training configuration. Defaults are the desk-scale
// preset; parse rejects unknown and duplicate keys.
struct TrainConfig {
  int stage = 1;               // 1 or 2
  int epochs = 20;
  int batch_size = 2;
  double lr_encoder = 5e-5;
  double lr_decoder = 1e-4;    // decoder + pose rate
  int decay_epoch = -1;        // lr/10 from this epoch on; -1 = 3/4 of epochs
  double weight_decay = 0.01;
  uint64_t seed = 1;
  double theta = 0.85;         // photometric SSIM/L1 blend
  double alpha = 0.001;        // smoothness weight
  double beta = 0.001;         // consistency weight
  double gamma = 1.0;          // distillation weight
  double delta_g = 0.04;       // geometric-consistency threshold
  double delta_d = 0.04;       // depth-consistency threshold
  double ema_momentum = 0.999;
  int num_scales = 4;
  double keep_prob = 0.75;     // feature-dropout keep probability
  int stage2_consistency = 0;  // 1 adds the consistency term in stage 2
  std::string arch = "tiny";
  std::string dataset;
  int width = 192, height = 64;
  int checkpoint_every = 0;    // periodic snapshots; 0 = final only
  int max_steps = 0;           // hard step cap; 0 = uncapped
};

// Effective first epoch of the reduced learning rate.
int decay_boundary(const TrainConfig& cfg);

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

// Canonical form: sorted keys, `key = value`, %.17g reals, LF. Parses back
// to an identical struct.
std::string serialize_config(const TrainConfig& cfg);

// Range/consistency checks (also run by parse_config).
void validate_config(const TrainConfig& cfg);

}  // namespace ecdepth
