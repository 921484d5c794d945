#include "hipart/lift.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace hipart {

using nn::Graph;
using nn::Var;

LifterModel::LifterModel(const RunConfig& cfg, const SkeletonHierarchy& h, bool hierarchical,
                         uint64_t init_seed)
    : h_(h), dim_(cfg.lift_dim), heads_(cfg.lift_heads), hier_(hierarchical) {
  tokens_ = hier_ ? h_.j_sparse + h_.j_dense + h_.j_fine : h_.j_sparse;
  level_expand_ = Mat::Zero(tokens_, 3);
  for (int i = 0; i < tokens_; ++i) {
    int level = 0;
    if (hier_ && i >= h_.j_sparse) level = i < h_.j_sparse + h_.j_dense ? 1 : 2;
    level_expand_(i, level) = 1.0;
  }

  Rng rng = Rng::derive(init_seed, 0x11F7);
  in_ = nn::Linear::create(ps, "in", 2, dim_, rng);
  pos_ = ps.add("pos", tokens_, dim_, 0.02, rng);
  level_ = ps.add("level", 3, dim_, 0.02, rng);
  for (int b = 0; b < cfg.lift_blocks; ++b)
    blocks_.push_back(nn::AttentionBlock::create(ps, "blk" + std::to_string(b), dim_, heads_,
                                                 2 * dim_, rng));
  ln_out_ = nn::LayerNormParams::create(ps, "ln_out", dim_);
  head_ = nn::Linear::create(ps, "head", dim_, 3, rng);
}

Var LifterModel::forward(Graph& g, const Mat& x, bool wg) const {
  if (x.rows() != tokens_ || x.cols() != 2)
    throw DomainError("lifter input must be " + std::to_string(tokens_) + " x 2");
  Var t = in_.apply(g, ps, g.constant(x), wg);
  t = nn::add(g, t, ps.bind(g, pos_, wg));
  t = nn::add(g, t, nn::matmul(g, g.constant(level_expand_), ps.bind(g, level_, wg)));
  for (const auto& b : blocks_) t = b.apply(g, ps, t, false, 0.0, nullptr, wg);
  t = ln_out_.apply(g, ps, t, wg);
  return head_.apply(g, ps, nn::slice_rows(g, t, 0, h_.j_sparse), wg);
}

Mat LifterModel::predict(const Mat& x) const {
  Graph g;
  return forward(g, x, false).val();
}

// ---------------------------------------------------------------------------

double mpjpe(const Mat& pred, const Mat& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3)
    throw DomainError("mpjpe expects matching J x 3 poses");
  Mat p = pred.rowwise() - pred.row(0);
  Mat q = gt.rowwise() - gt.row(0);
  double sum = 0;
  for (int i = 0; i < p.rows(); ++i) sum += (p.row(i) - q.row(i)).norm();
  return sum / p.rows();
}

double pa_mpjpe(const Mat& pred, const Mat& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3)
    throw DomainError("pa_mpjpe expects matching J x 3 poses");
  int n = static_cast<int>(pred.rows());
  Mat g = gt.rowwise() - gt.colwise().mean();
  if (g.squaredNorm() < 1e-18) throw DomainError("pa_mpjpe: degenerate ground truth");
  // similarity alignment (scale + rotation + translation, no reflection)
  Eigen::Matrix4d t = Eigen::umeyama(pred.transpose(), gt.transpose(), true);
  Eigen::Matrix3d sr = t.topLeftCorner<3, 3>();
  Eigen::Vector3d tr = t.topRightCorner<3, 1>();
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d a = sr * pred.row(i).transpose() + tr;
    sum += (a - gt.row(i).transpose()).norm();
  }
  return sum / n;
}

// ---------------------------------------------------------------------------

LiftResult train_lifter(LifterModel& m, nn::AdamW& opt, const std::vector<Mat>& inputs,
                        const std::vector<Mat>& targets, const RunConfig& cfg, int epoch_begin,
                        int epoch_end) {
  if (inputs.size() != targets.size()) throw DomainError("input/target count mismatch");
  if (inputs.empty()) throw DomainError("train_lifter: empty dataset");
  int n = static_cast<int>(inputs.size());
  int batch = std::min(cfg.lift_batch, n);
  int steps_per_epoch = (n + batch - 1) / batch;

  nn::TrainSchedule sched;
  sched.peak_lr = cfg.lift_lr;
  sched.weight_decay = 0.0;
  sched.warmup_iters = 0;
  sched.total_iters = cfg.lift_epochs * steps_per_epoch;
  sched.shape = nn::TrainSchedule::Shape::kMultiplicative;
  sched.mult_factor = cfg.lift_decay_factor;
  sched.mult_period_iters = std::max(1, cfg.lift_decay_epochs * steps_per_epoch);
  sched.validate();

  LiftResult result;
  std::vector<Mat> snap;
  auto take_snapshot = [&] {
    snap.clear();
    for (int i = 0; i < m.ps.size(); ++i) snap.push_back(m.ps.value(i));
  };
  auto restore_snapshot = [&] {
    for (int i = 0; i < m.ps.size() && i < static_cast<int>(snap.size()); ++i)
      m.ps.value(i) = snap[i];
  };
  take_snapshot();

  int out_coords = static_cast<int>(targets[0].rows() * targets[0].cols());

  for (int epoch = epoch_begin; epoch < epoch_end; ++epoch) {
    Rng erng = Rng::derive(static_cast<uint64_t>(cfg.train_seed), 0x11F7E2,
                           static_cast<uint64_t>(epoch));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    erng.shuffle(order);

    double sum_mse = 0;
    for (int b0 = 0; b0 < n; b0 += batch) {
      int bs = std::min(batch, n - b0);
      nn::Graph g;
      Var loss_sum;
      bool bad = false;
      for (int i = 0; i < bs; ++i) {
        int idx = order[b0 + i];
        Var pred = m.forward(g, inputs[idx], true);
        Var loss = nn::sum_sq(g, nn::sub(g, pred, g.constant(targets[idx])));
        double v = loss.val()(0, 0);
        if (!std::isfinite(v)) {
          bad = true;
          break;
        }
        sum_mse += v / out_coords;
        loss_sum = (i == 0) ? loss : nn::add(g, loss_sum, loss);
      }
      if (bad) {
        restore_snapshot();
        result.aborted = true;
        return result;
      }
      g.backward(nn::scale(g, loss_sum, 1.0 / bs));
      nn::GradAccumulator acc(m.ps);
      acc.add_from(g);
      opt.step(m.ps, acc.grads, sched);
    }

    result.epochs.push_back({epoch, sum_mse / n});
    take_snapshot();
  }
  return result;
}

}  // namespace hipart
