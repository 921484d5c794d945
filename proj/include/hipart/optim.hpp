#pragma once

#include <functional>

#include "hipart/blocks.hpp"

namespace hipart::nn {

struct TrainSchedule {
  enum class Shape { kCosine, kMultiplicative };

  double peak_lr = 1e-3;
  double weight_decay = 0.0;
  int warmup_iters = 0;
  int total_iters = 1;
  Shape shape = Shape::kCosine;
  double floor_lr = 0.0;
  double mult_factor = 0.96;
  int mult_period_iters = 1;  // iterations per decay period

  double lr(int t) const;
  void validate() const;
};

// Decoupled weight decay Adam. Moments are f32-rounded alongside the
// parameters so checkpointed training resumes exactly.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& ps, const std::vector<Mat>& grads, const TrainSchedule& sched);

  int iteration() const { return t_; }
  std::vector<Mat>& moment1() { return m_; }
  std::vector<Mat>& moment2() { return v_; }
  void set_iteration(int t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

// Accumulates per-parameter gradients from one or more Graph backward passes.
struct GradAccumulator {
  explicit GradAccumulator(const ParamStore& ps);
  void add_from(const Graph& g);
  void scale_all(double s);
  std::vector<Mat> grads;
};

struct GradCheckEntry {
  int param_id;
  int row, col;
  double analytic, numeric, rel_err;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<GradCheckEntry> entries;
};

// loss_fn(ps, grads): returns the loss; when grads != nullptr it must also
// accumulate analytic gradients (one Mat per parameter, pre-zeroed).
using LossFn = std::function<double(ParamStore&, std::vector<Mat>*)>;

// Central finite differences on >= min_coords randomly sampled coordinates.
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& ps, double eps, double tolerance,
                           Rng& rng, int min_coords = 64);

}  // namespace hipart::nn
