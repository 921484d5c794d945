#include "hipart/optim.hpp"

#include <cmath>

namespace hipart::nn {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void TrainSchedule::validate() const {
  if (peak_lr <= 0) throw ConfigError("peak learning rate must be positive");
  if (warmup_iters > total_iters) throw ConfigError("warmup exceeds total iterations");
  if (shape == Shape::kMultiplicative && mult_period_iters < 1)
    throw ConfigError("multiplicative period must be >= 1");
}

double TrainSchedule::lr(int t) const {
  if (t < warmup_iters) return peak_lr * static_cast<double>(t + 1) / warmup_iters;
  if (shape == Shape::kCosine) {
    double span = std::max(1, total_iters - warmup_iters);
    double phase = static_cast<double>(t - warmup_iters) / span;
    return floor_lr + (peak_lr - floor_lr) * 0.5 * (1.0 + std::cos(kPi * phase));
  }
  int period = (t - warmup_iters) / mult_period_iters;
  return peak_lr * std::pow(mult_factor, period);
}

void AdamW::step(ParamStore& ps, const std::vector<Mat>& grads, const TrainSchedule& sched) {
  if (m_.empty()) {
    m_.resize(ps.size());
    v_.resize(ps.size());
    for (int i = 0; i < ps.size(); ++i) {
      m_[i] = Mat::Zero(ps.value(i).rows(), ps.value(i).cols());
      v_[i] = Mat::Zero(ps.value(i).rows(), ps.value(i).cols());
    }
  }
  double lr = sched.lr(t_);
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  for (int i = 0; i < ps.size(); ++i) {
    const Mat& gr = grads[i];
    if (!gr.allFinite())
      throw NumericError("non-finite gradient for parameter " + ps.name(i));
    Mat& p = ps.value(i);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gr;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gr.cwiseProduct(gr);
    if (sched.weight_decay > 0.0) p -= lr * sched.weight_decay * p;
    Mat mhat = m_[i] / bc1;
    Mat vhat = v_[i] / bc2;
    p -= lr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
  }
  ps.round_to_f32();
  for (auto& m : m_)
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(static_cast<float>(m(i, j)));
  for (auto& v : v_)
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) v(i, j) = static_cast<double>(static_cast<float>(v(i, j)));
}

GradAccumulator::GradAccumulator(const ParamStore& ps) {
  grads.resize(ps.size());
  for (int i = 0; i < ps.size(); ++i)
    grads[i] = Mat::Zero(ps.value(i).rows(), ps.value(i).cols());
}

void GradAccumulator::add_from(const Graph& g) {
  for (const auto& [id, gr] : g.param_grads()) grads[id] += *gr;
}

void GradAccumulator::scale_all(double s) {
  for (auto& g : grads) g *= s;
}

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& ps, double eps, double tolerance,
                           Rng& rng, int min_coords) {
  std::vector<Mat> analytic(ps.size());
  for (int i = 0; i < ps.size(); ++i)
    analytic[i] = Mat::Zero(ps.value(i).rows(), ps.value(i).cols());
  loss_fn(ps, &analytic);

  GradCheckReport report;
  size_t total = ps.scalar_count();
  int n = std::max<int>(min_coords, 0);
  for (int c = 0; c < n; ++c) {
    size_t flat = rng.uniform_int(total);
    int id = 0;
    while (flat >= static_cast<size_t>(ps.value(id).size())) {
      flat -= static_cast<size_t>(ps.value(id).size());
      ++id;
    }
    int col = static_cast<int>(flat / ps.value(id).rows());
    int row = static_cast<int>(flat % ps.value(id).rows());

    double orig = ps.value(id)(row, col);
    ps.value(id)(row, col) = orig + eps;
    double lp = loss_fn(ps, nullptr);
    ps.value(id)(row, col) = orig - eps;
    double lm = loss_fn(ps, nullptr);
    ps.value(id)(row, col) = orig;

    double numeric = (lp - lm) / (2.0 * eps);
    double a = analytic[id](row, col);
    double rel = std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
    report.entries.push_back({id, row, col, a, numeric, rel});
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace hipart::nn
