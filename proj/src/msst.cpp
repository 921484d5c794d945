#include "hipart/msst.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hipart {

using nn::Graph;
using nn::Var;

void Codebook::allocate(int k, int d) {
  entries = Mat::Zero(k, d);
  ema_counts = Vec::Zero(k);
  ema_sums = Mat::Zero(k, d);
  initialized = false;
}

void Codebook::init_from_rows(const Mat& rows, Rng& rng) {
  if (rows.rows() < 1) throw DomainError("codebook init needs at least one row");
  for (int k = 0; k < K(); ++k) {
    int pick = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(rows.rows())));
    entries.row(k) = rows.row(pick);
    // tiny jitter so duplicated picks are not exactly degenerate
    for (int d = 0; d < D(); ++d) entries(k, d) += 1e-4 * rng.normal();
    for (int d = 0; d < D(); ++d)
      entries(k, d) = static_cast<double>(static_cast<float>(entries(k, d)));
    ema_counts(k) = 1.0;
    ema_sums.row(k) = entries.row(k);
  }
  initialized = true;
}

QuantizeResult quantize(const Mat& z, const Codebook& c) {
  if (!z.allFinite()) throw NumericError("non-finite embedding passed to quantize");
  QuantizeResult r;
  r.indices.resize(z.rows());
  r.zq.resize(z.rows(), c.D());
  for (int j = 0; j < z.rows(); ++j) {
    int best = 0;
    double best_d = (z.row(j) - c.entries.row(0)).squaredNorm();
    for (int k = 1; k < c.K(); ++k) {
      double d = (z.row(j) - c.entries.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    r.indices[j] = best;
    r.zq.row(j) = c.entries.row(best);
  }
  return r;
}

void ema_update(Codebook& c, const Mat& z, const std::vector<int>& q, double gamma) {
  Vec n = Vec::Zero(c.K());
  Mat s = Mat::Zero(c.K(), c.D());
  for (size_t j = 0; j < q.size(); ++j) {
    n(q[j]) += 1.0;
    s.row(q[j]) += z.row(static_cast<int>(j));
  }
  c.ema_counts = gamma * c.ema_counts + (1.0 - gamma) * n;
  c.ema_sums = gamma * c.ema_sums + (1.0 - gamma) * s;
  // snap to f32 so the checkpoint round trip is lossless
  for (int k = 0; k < c.K(); ++k) {
    c.ema_counts(k) = static_cast<double>(static_cast<float>(c.ema_counts(k)));
    for (int d = 0; d < c.D(); ++d)
      c.ema_sums(k, d) = static_cast<double>(static_cast<float>(c.ema_sums(k, d)));
    c.entries.row(k) = c.ema_sums.row(k) / (c.ema_counts(k) + 1e-5);
    for (int d = 0; d < c.D(); ++d)
      c.entries(k, d) = static_cast<double>(static_cast<float>(c.entries(k, d)));
  }
}

double perplexity(const std::vector<long long>& counts) {
  long long total = std::accumulate(counts.begin(), counts.end(), 0ll);
  if (total == 0) return 0.0;
  double ent = 0.0;
  for (long long c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    ent -= p * std::log(p);
  }
  return std::exp(ent);
}

// ---------------------------------------------------------------------------

namespace {

Mat group_average_matrix(const std::vector<std::vector<int>>& parts, int fine_n) {
  Mat p = Mat::Zero(static_cast<int>(parts.size()), fine_n);
  for (size_t i = 0; i < parts.size(); ++i)
    for (int j : parts[i]) p(static_cast<int>(i), j) = 1.0 / parts[i].size();
  return p;
}

Mat replication_matrix(const std::vector<std::vector<int>>& parts, int fine_n) {
  Mat u = Mat::Zero(fine_n, static_cast<int>(parts.size()));
  for (size_t i = 0; i < parts.size(); ++i)
    for (int j : parts[i]) u(j, static_cast<int>(i)) = 1.0;
  return u;
}

}  // namespace

MsstModel::MsstModel(const RunConfig& cfg, const SkeletonHierarchy& h, uint64_t init_seed)
    : h_(h),
      dim_(cfg.msst_dim),
      ed_dim_(cfg.msst_ed_dim),
      cdim_(cfg.codebook_dim),
      num_actions_(cfg.num_actions) {
  pool_df_ = group_average_matrix(h_.part_map_df, h_.j_fine);
  pool_sd_ = group_average_matrix(h_.part_map_sd, h_.j_dense);
  up_sd_ = replication_matrix(h_.part_map_sd, h_.j_dense);
  up_df_ = replication_matrix(h_.part_map_df, h_.j_fine);

  Rng rng = Rng::derive(init_seed, 0x4D55);
  int th_f = h_.j_fine, th_d = h_.j_dense, th_s = h_.j_sparse;

  in_f_ = nn::Linear::create(ps, "ef.in", 2, dim_, rng);
  pos_f_ = ps.add("ef.pos", h_.j_fine, dim_, 0.02, rng);
  for (int b = 0; b < cfg.msst_enc_blocks; ++b)
    enc_f_.push_back(nn::MixerBlock::create(ps, "ef.mix" + std::to_string(b), h_.j_fine, dim_,
                                            th_f, 2 * dim_, rng));
  proj_zd_ = nn::Linear::create(ps, "ef.out", dim_, dim_, rng);

  proj_de_ = nn::Linear::create(ps, "ed.in", dim_, ed_dim_, rng);
  pos_d_ = ps.add("ed.pos", h_.j_dense, ed_dim_, 0.02, rng);
  for (int b = 0; b < cfg.msst_enc_blocks; ++b)
    enc_d_.push_back(nn::MixerBlock::create(ps, "ed.mix" + std::to_string(b), h_.j_dense, ed_dim_,
                                            th_d, 2 * ed_dim_, rng));
  proj_zs_ = nn::Linear::create(ps, "ed.out", ed_dim_, cdim_, rng);

  dsparse_in_ = nn::Linear::create(ps, "ds.in", cdim_, dim_, rng);
  for (int b = 0; b < cfg.msst_dec_blocks; ++b)
    dsparse_blocks_.push_back(nn::MixerBlock::create(ps, "ds.mix" + std::to_string(b),
                                                     h_.j_sparse, dim_, th_s, 2 * dim_, rng));

  proj_dense_ = nn::Linear::create(ps, "zp.proj", 2 * dim_, cdim_, rng);

  ddense_in_ = nn::Linear::create(ps, "dd.in", cdim_, dim_, rng);
  for (int b = 0; b < cfg.msst_dec_blocks; ++b)
    ddense_blocks_.push_back(nn::MixerBlock::create(ps, "dd.mix" + std::to_string(b), h_.j_dense,
                                                    dim_, th_d, 2 * dim_, rng));
  ddense_out_ = nn::Linear::create(ps, "dd.out", dim_, 2, rng);

  dfine_in_ = nn::Linear::create(ps, "df.in", cdim_ + dim_, dim_, rng);
  pos_dec_f_ = ps.add("df.pos", h_.j_fine, dim_, 0.02, rng);
  for (int b = 0; b < cfg.msst_dec_blocks; ++b)
    dfine_blocks_.push_back(nn::MixerBlock::create(ps, "df.mix" + std::to_string(b), h_.j_fine,
                                                   dim_, th_f, 2 * dim_, rng));
  dfine_out_ = nn::Linear::create(ps, "df.out", dim_, 2, rng);

  pa_in_ = nn::Linear::create(ps, "pa.in", 2 * cdim_, dim_, rng);
  for (int b = 0; b < 2; ++b)
    pa_blocks_.push_back(nn::MixerBlock::create(ps, "pa.mix" + std::to_string(b), h_.j_dense,
                                                dim_, th_d, 2 * dim_, rng));
  pa_out_ = nn::Linear::create(ps, "pa.out", dim_, num_actions_, rng);

  cb_s.allocate(cfg.codebook_k_sparse, cdim_);
  cb_d.allocate(cfg.codebook_k_dense, cdim_);
}

Var MsstModel::run_encoder(Graph& g, const Mat& x_f, bool wg) const {
  if (x_f.rows() != h_.j_fine || x_f.cols() != 2)
    throw DomainError("encoder input must be j_fine x 2");
  Var x = in_f_.apply(g, ps, g.constant(x_f), wg);
  x = nn::add(g, x, ps.bind(g, pos_f_, wg));
  for (const auto& b : enc_f_) x = b.apply(g, ps, x, wg);
  Var pooled = nn::matmul(g, g.constant(pool_df_), x);
  return proj_zd_.apply(g, ps, pooled, wg);
}

Var MsstModel::run_encoder_sparse(Graph& g, Var z_d, bool wg) const {
  Var y = proj_de_.apply(g, ps, z_d, wg);
  y = nn::add(g, y, ps.bind(g, pos_d_, wg));
  for (const auto& b : enc_d_) y = b.apply(g, ps, y, wg);
  Var pooled = nn::matmul(g, g.constant(pool_sd_), y);
  return proj_zs_.apply(g, ps, pooled, wg);
}

Var MsstModel::run_dsparse(Graph& g, Var zq_s, bool wg) const {
  Var t = dsparse_in_.apply(g, ps, zq_s, wg);
  for (const auto& b : dsparse_blocks_) t = b.apply(g, ps, t, wg);
  return nn::matmul(g, g.constant(up_sd_), t);
}

Var MsstModel::run_zpd(Graph& g, Var z_d, Var zs_up, bool wg) const {
  return proj_dense_.apply(g, ps, nn::concat_cols(g, {z_d, zs_up}), wg);
}

Var MsstModel::run_ddense(Graph& g, Var zq_d, bool wg) const {
  Var t = ddense_in_.apply(g, ps, zq_d, wg);
  for (const auto& b : ddense_blocks_) t = b.apply(g, ps, t, wg);
  return ddense_out_.apply(g, ps, t, wg);
}

Var MsstModel::run_dfine(Graph& g, Var zq_d, Var zs_up, bool wg) const {
  Var t = dfine_in_.apply(g, ps, nn::concat_cols(g, {zq_d, zs_up}), wg);
  Var up = nn::matmul(g, g.constant(up_df_), t);
  up = nn::add(g, up, ps.bind(g, pos_dec_f_, wg));
  for (const auto& b : dfine_blocks_) up = b.apply(g, ps, up, wg);
  return dfine_out_.apply(g, ps, up, wg);
}

Var MsstModel::run_paction(Graph& g, Var zq_s, Var zq_d, bool wg) const {
  Var s_up = nn::matmul(g, g.constant(up_sd_), zq_s);
  Var t = pa_in_.apply(g, ps, nn::concat_cols(g, {s_up, zq_d}), wg);
  for (const auto& b : pa_blocks_) t = b.apply(g, ps, t, wg);
  return pa_out_.apply(g, ps, nn::mean_rows(g, t), wg);
}

MsstModel::Forward MsstModel::forward(Graph& g, const Mat& x_f, bool with_grad) const {
  if (!cb_s.initialized || !cb_d.initialized)
    throw NumericError("msst forward before codebook initialization");
  Forward f;
  f.z_d = run_encoder(g, x_f, with_grad);
  f.z_s = run_encoder_sparse(g, f.z_d, with_grad);
  QuantizeResult qs = quantize(f.z_s.val(), cb_s);
  f.q_s = qs.indices;
  f.zq_s = nn::straight_through(g, f.z_s, qs.zq);
  f.zs_up = run_dsparse(g, f.zq_s, with_grad);
  f.zp_d = run_zpd(g, f.z_d, f.zs_up, with_grad);
  QuantizeResult qd = quantize(f.zp_d.val(), cb_d);
  f.q_d = qd.indices;
  f.zq_d = nn::straight_through(g, f.zp_d, qd.zq);
  f.xhat_d = run_ddense(g, f.zq_d, with_grad);
  f.xhat_f = run_dfine(g, f.zq_d, f.zs_up, with_grad);
  f.pa = run_paction(g, f.zq_s, f.zq_d, with_grad);
  return f;
}

Mat MsstModel::encode_sparse_rows(const Mat& x_f) const {
  Graph g;
  Var z_d = run_encoder(g, x_f, false);
  return run_encoder_sparse(g, z_d, false).val();
}

Mat MsstModel::encode_dense_rows(const Mat& x_f) const {
  if (!cb_s.initialized) throw NumericError("sparse codebook must be initialized first");
  Graph g;
  Var z_d = run_encoder(g, x_f, false);
  Var z_s = run_encoder_sparse(g, z_d, false);
  QuantizeResult qs = quantize(z_s.val(), cb_s);
  Var zq_s = g.constant(qs.zq);
  Var zs_up = run_dsparse(g, zq_s, false);
  return run_zpd(g, z_d, zs_up, false).val();
}

MsstModel::Tokens MsstModel::encode_tokens(const Mat& x_f) const {
  if (!cb_s.initialized || !cb_d.initialized)
    throw NumericError("encode_tokens before codebook initialization");
  Graph g;
  Var z_d = run_encoder(g, x_f, false);
  Var z_s = run_encoder_sparse(g, z_d, false);
  QuantizeResult qs = quantize(z_s.val(), cb_s);
  Var zs_up = run_dsparse(g, g.constant(qs.zq), false);
  Var zp_d = run_zpd(g, z_d, zs_up, false);
  QuantizeResult qd = quantize(zp_d.val(), cb_d);
  return {qs.indices, qd.indices};
}

std::pair<Mat, Mat> MsstModel::decode_tokens(const std::vector<int>& q_s,
                                             const std::vector<int>& q_d) const {
  if (static_cast<int>(q_s.size()) != h_.j_sparse ||
      static_cast<int>(q_d.size()) != h_.j_dense)
    throw DomainError("token count mismatch with hierarchy");
  Mat zq_s(h_.j_sparse, cdim_), zq_d(h_.j_dense, cdim_);
  for (int i = 0; i < h_.j_sparse; ++i) {
    if (q_s[i] < 0 || q_s[i] >= cb_s.K()) throw DomainError("sparse token out of range");
    zq_s.row(i) = cb_s.entries.row(q_s[i]);
  }
  for (int i = 0; i < h_.j_dense; ++i) {
    if (q_d[i] < 0 || q_d[i] >= cb_d.K()) throw DomainError("dense token out of range");
    zq_d.row(i) = cb_d.entries.row(q_d[i]);
  }
  Graph g;
  Var zs_up = run_dsparse(g, g.constant(zq_s), false);
  Var xhat_d = run_ddense(g, g.constant(zq_d), false);
  Var xhat_f = run_dfine(g, g.constant(zq_d), zs_up, false);
  return {xhat_d.val(), xhat_f.val()};
}

// ---------------------------------------------------------------------------

Var local_alignment_loss(Graph& g, Var zq_s, Var zq_d, const SkeletonHierarchy& h, double tau) {
  if (tau <= 0) throw DomainError("tau must be positive");
  Mat pool = group_average_matrix(h.part_map_sd, h.j_dense);
  Var avg_d = nn::matmul(g, g.constant(pool), zq_d);
  Var ns = nn::l2_normalize_rows(g, zq_s);
  Var nd = nn::l2_normalize_rows(g, avg_d);
  Var sim = nn::scale(g, nn::matmul(g, ns, nn::transpose(g, nd)), 1.0 / tau);
  std::vector<int> labels(h.j_sparse);
  std::iota(labels.begin(), labels.end(), 0);
  return nn::scale(g, nn::cross_entropy_rows(g, sim, labels), static_cast<double>(h.j_sparse));
}

Var global_alignment_loss(Graph& g, Var pa_logits, int action) {
  return nn::cross_entropy_rows(g, pa_logits, {action});
}

Var stage1_loss(Graph& g, const MsstModel& m, const MsstModel::Forward& f, const Mat& x_f,
                const Mat& x_d, int action, const Stage1Weights& w, Stage1Terms* terms) {
  Var recon_f = nn::sum_sq(g, nn::sub(g, f.xhat_f, g.constant(x_f)));
  Var recon_d = nn::sum_sq(g, nn::sub(g, f.xhat_d, g.constant(x_d)));

  // codebook-matching term: EMA owns the entries, so this is a constant scalar
  double cb_val = (f.z_s.val() - f.zq_s.val()).squaredNorm() +
                  (f.zp_d.val() - f.zq_d.val()).squaredNorm();
  Var cb_term = g.constant(Mat::Constant(1, 1, cb_val));

  Var commit_s = nn::sum_sq(g, nn::sub(g, f.z_s, g.constant(f.zq_s.val())));
  Var commit_d = nn::sum_sq(g, nn::sub(g, f.zp_d, g.constant(f.zq_d.val())));
  Var commit = nn::add(g, commit_s, commit_d);

  Var local = local_alignment_loss(g, f.zq_s, f.zq_d, m.hierarchy(), w.tau);
  Var global = global_alignment_loss(g, f.pa, action);

  Var total = nn::add(g, recon_f, recon_d);
  total = nn::add(g, total, cb_term);
  total = nn::add(g, total, nn::scale(g, commit, w.beta));
  total = nn::add(g, total, nn::scale(g, local, w.lambda_local));
  total = nn::add(g, total, nn::scale(g, global, w.lambda_global));

  if (terms) {
    terms->recon_f = recon_f.val()(0, 0);
    terms->recon_d = recon_d.val()(0, 0);
    terms->codebook = cb_val;
    terms->commit = w.beta * commit.val()(0, 0);
    terms->local = w.lambda_local * local.val()(0, 0);
    terms->global = w.lambda_global * global.val()(0, 0);
    terms->total = total.val()(0, 0);
  }
  return total;
}

// ---------------------------------------------------------------------------

Stage1Result train_stage1(MsstModel& m, nn::AdamW& opt, const std::vector<NormSample>& data,
                          const RunConfig& cfg, int epoch_begin, int epoch_end) {
  if (data.empty()) throw DomainError("train_stage1: empty dataset");
  int n = static_cast<int>(data.size());
  int batch = std::min(cfg.msst_batch, n);
  int steps_per_epoch = (n + batch - 1) / batch;
  int total_iters = cfg.msst_epochs * steps_per_epoch;

  nn::TrainSchedule sched;
  sched.peak_lr = cfg.msst_lr;
  sched.weight_decay = cfg.msst_weight_decay;
  sched.warmup_iters = std::min(cfg.msst_warmup_iters, total_iters / 2);
  sched.total_iters = total_iters;
  sched.shape = nn::TrainSchedule::Shape::kCosine;
  sched.validate();

  Stage1Weights w{cfg.beta_commit, cfg.lambda_local, cfg.lambda_global, cfg.tau};
  const SkeletonHierarchy& h = m.hierarchy();
  Stage1Result result;

  // last-good snapshot for the non-finite abort path
  std::vector<Mat> snap_params;
  Codebook snap_cs = m.cb_s, snap_cd = m.cb_d;
  auto take_snapshot = [&] {
    snap_params.clear();
    for (int i = 0; i < m.ps.size(); ++i) snap_params.push_back(m.ps.value(i));
    snap_cs = m.cb_s;
    snap_cd = m.cb_d;
  };
  auto restore_snapshot = [&] {
    if (snap_params.empty()) return;
    for (int i = 0; i < m.ps.size(); ++i) m.ps.value(i) = snap_params[i];
    m.cb_s = snap_cs;
    m.cb_d = snap_cd;
  };
  take_snapshot();

  for (int epoch = epoch_begin; epoch < epoch_end; ++epoch) {
    Rng erng = Rng::derive(static_cast<uint64_t>(cfg.train_seed), 0x51A9E1,
                           static_cast<uint64_t>(epoch));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    erng.shuffle(order);

    std::vector<long long> use_s(m.cb_s.K(), 0), use_d(m.cb_d.K(), 0);
    double sum_sq_f = 0, sum_sq_d = 0, sum_total = 0;

    for (int b0 = 0; b0 < n; b0 += batch) {
      int bs = std::min(batch, n - b0);

      if (!m.cb_s.initialized) {
        Mat rows_s(bs * h.j_sparse, m.codebook_dim());
        for (int i = 0; i < bs; ++i)
          rows_s.middleRows(i * h.j_sparse, h.j_sparse) =
              m.encode_sparse_rows(data[order[b0 + i]].x_f);
        Rng irng = Rng::derive(static_cast<uint64_t>(cfg.train_seed), 0xC0DE, 0);
        m.cb_s.init_from_rows(rows_s, irng);
        Mat rows_d(bs * h.j_dense, m.codebook_dim());
        for (int i = 0; i < bs; ++i)
          rows_d.middleRows(i * h.j_dense, h.j_dense) =
              m.encode_dense_rows(data[order[b0 + i]].x_f);
        Rng irng2 = Rng::derive(static_cast<uint64_t>(cfg.train_seed), 0xC0DE, 1);
        m.cb_d.init_from_rows(rows_d, irng2);
      }

      nn::Graph g;
      Var loss_sum;
      Mat ema_zs(bs * h.j_sparse, m.codebook_dim());
      Mat ema_zd(bs * h.j_dense, m.codebook_dim());
      std::vector<int> ema_qs, ema_qd;
      ema_qs.reserve(bs * h.j_sparse);
      ema_qd.reserve(bs * h.j_dense);
      bool bad = false;

      for (int i = 0; i < bs; ++i) {
        const NormSample& s = data[order[b0 + i]];
        MsstModel::Forward f = m.forward(g, s.x_f, true);
        Stage1Terms terms;
        Var loss = stage1_loss(g, m, f, s.x_f, s.x_d, s.action, w, &terms);
        if (!std::isfinite(terms.total)) {
          bad = true;
          break;
        }
        sum_sq_f += terms.recon_f;
        sum_sq_d += terms.recon_d;
        sum_total += terms.total;
        loss_sum = (i == 0) ? loss : nn::add(g, loss_sum, loss);

        ema_zs.middleRows(i * h.j_sparse, h.j_sparse) = f.z_s.val();
        ema_zd.middleRows(i * h.j_dense, h.j_dense) = f.zp_d.val();
        for (int q : f.q_s) {
          ema_qs.push_back(q);
          ++use_s[q];
        }
        for (int q : f.q_d) {
          ema_qd.push_back(q);
          ++use_d[q];
        }
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

      ema_update(m.cb_s, ema_zs, ema_qs, cfg.ema_gamma);
      ema_update(m.cb_d, ema_zd, ema_qd, cfg.ema_gamma);
    }

    Stage1EpochMetrics em;
    em.epoch = epoch;
    em.mse_f = sum_sq_f / (static_cast<double>(n) * h.j_fine * 2);
    em.mse_d = sum_sq_d / (static_cast<double>(n) * h.j_dense * 2);
    em.total = sum_total / n;
    em.perplexity_s = perplexity(use_s);
    em.perplexity_d = perplexity(use_d);
    result.epochs.push_back(em);
    take_snapshot();
  }
  return result;
}

}  // namespace hipart
