#pragma once

#include "hipart/config.hpp"
#include "hipart/optim.hpp"
#include "hipart/skeleton.hpp"

namespace hipart {

// Spatial transformer over per-joint tokens: all three 2D levels concatenated
// along the joint axis (hierarchical mode) or the sparse level alone.
class LifterModel {
 public:
  LifterModel(const RunConfig& cfg, const SkeletonHierarchy& h, bool hierarchical,
              uint64_t init_seed);

  int input_tokens() const { return tokens_; }
  bool hierarchical() const { return hier_; }

  nn::Var forward(nn::Graph& g, const Mat& x, bool with_grad) const;  // j_sparse x 3
  Mat predict(const Mat& x) const;

  nn::ParamStore ps;

 private:
  SkeletonHierarchy h_;
  int dim_, heads_, tokens_;
  bool hier_;
  Mat level_expand_;  // tokens x 3 one-hot level selector

  nn::Linear in_;
  int pos_ = -1, level_ = -1;
  std::vector<nn::AttentionBlock> blocks_;
  nn::LayerNormParams ln_out_;
  nn::Linear head_;
};

// Protocol 1: root-aligned mean per-joint error (units preserved).
double mpjpe(const Mat& pred, const Mat& gt);
// Protocol 2: similarity-aligned (scale + rotation + translation, reflection
// disallowed) mean per-joint error.
double pa_mpjpe(const Mat& pred, const Mat& gt);

struct LiftEpochMetrics {
  int epoch = 0;
  double train_mse = 0;
};

struct LiftResult {
  std::vector<LiftEpochMetrics> epochs;
  bool aborted = false;
};

// L2 regression on 3D joints; `inputs` rows are (tokens x 2), `targets`
// (j_sparse x 3).
LiftResult train_lifter(LifterModel& m, nn::AdamW& opt, const std::vector<Mat>& inputs,
                        const std::vector<Mat>& targets, const RunConfig& cfg, int epoch_begin,
                        int epoch_end);

}  // namespace hipart
