#pragma once

#include <string>

#include "hipart/common.hpp"

namespace hipart {

// Flat run configuration covering every pipeline stage. Defaults are the
// paper-scale profile; configs/desk.cfg overrides them for CPU-sized runs.
struct RunConfig {
  // hierarchy
  int j_sparse = 16;
  int j_dense = 48;
  int j_fine = 96;

  // data
  int data_n = 10000;
  int data_seed = 7;
  int num_actions = 8;
  double noise_px = 2.0;
  double occlude_prob = 0.0;       // fraction of samples with a masked detector region
  double occlude_max_ratio = 0.5;  // mask area ratio drawn uniform in [0, max]
  double train_fraction = 0.9;

  // msst (stage 1)
  int msst_dim = 128;
  int msst_ed_dim = 96;
  int codebook_k_sparse = 2048;
  int codebook_k_dense = 2048;
  int codebook_dim = 128;
  int msst_enc_blocks = 4;
  int msst_dec_blocks = 1;
  int msst_batch = 128;
  int msst_epochs = 20;
  double msst_lr = 1e-3;
  double msst_weight_decay = 0.15;
  int msst_warmup_iters = 500;
  double beta_commit = 0.25;
  double lambda_local = 1.0;
  double lambda_global = 0.3;
  double tau = 0.07;
  double ema_gamma = 0.99;

  // hiarm (stage 2)
  int hiarm_dim = 128;
  int hiarm_heads = 8;
  int lsab_blocks = 1;
  int gcsab_blocks = 12;
  int ph_blocks = 4;
  int hiarm_batch = 64;
  int hiarm_epochs = 50;
  double hiarm_lr = 5e-4;
  double hiarm_weight_decay = 0.03;
  double hiarm_dropout = 0.25;
  double lambda_d = 1.5;
  bool hiarm_single_pass = false;
  double cond_occlude_prob = 0.5;
  double cond_occlude_max_ratio = 0.4;

  // lifter
  int lift_dim = 96;
  int lift_heads = 6;
  int lift_blocks = 12;
  int lift_batch = 256;
  int lift_epochs = 25;
  double lift_lr = 1e-3;
  double lift_decay_factor = 0.96;
  int lift_decay_epochs = 4;

  int train_seed = 1;

  void validate() const;
  std::string canonical() const;   // stable serialization used for hashing
  uint64_t hash() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace hipart
