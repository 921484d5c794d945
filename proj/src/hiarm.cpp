#include "hipart/hiarm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hipart/posegen.hpp"

namespace hipart {

using nn::Graph;
using nn::Var;

TokenGrid grid_from_tokens(const SkeletonHierarchy& h, const MsstModel::Tokens& t) {
  if (static_cast<int>(t.q_s.size()) != h.j_sparse ||
      static_cast<int>(t.q_d.size()) != h.j_dense)
    throw DomainError("token count mismatch with hierarchy");
  TokenGrid grid;
  grid.q_s.reserve(h.j_sparse);
  grid.q_d.reserve(h.j_sparse);
  for (int part : h.gen_order) {
    grid.q_s.push_back(t.q_s[part]);
    std::vector<int> row;
    for (int dj : h.part_map_sd[part]) row.push_back(t.q_d[dj]);
    grid.q_d.push_back(std::move(row));
  }
  return grid;
}

MsstModel::Tokens tokens_from_grid(const SkeletonHierarchy& h, const TokenGrid& grid) {
  MsstModel::Tokens t;
  t.q_s.assign(h.j_sparse, 0);
  t.q_d.assign(h.j_dense, 0);
  for (size_t i = 0; i < grid.q_s.size(); ++i) {
    int part = h.gen_order[i];
    t.q_s[part] = grid.q_s[i];
    for (size_t k = 0; k < grid.q_d[i].size(); ++k) t.q_d[h.part_map_sd[part][k]] = grid.q_d[i][k];
  }
  return t;
}

void validate_grid(const TokenGrid& grid, const SkeletonHierarchy& h, int k_sparse, int k_dense) {
  if (static_cast<int>(grid.q_s.size()) != h.j_sparse)
    throw DomainError("token grid has wrong pair count");
  for (int q : grid.q_s)
    if (q < 0 || q >= k_sparse) throw DomainError("sparse token out of range");
  for (const auto& row : grid.q_d) {
    if (static_cast<int>(row.size()) != h.r) throw DomainError("token grid row has wrong width");
    for (int q : row)
      if (q < 0 || q >= k_dense) throw DomainError("dense token out of range");
  }
}

// ---------------------------------------------------------------------------

HiarmModel::HiarmModel(const RunConfig& cfg, const SkeletonHierarchy& h, uint64_t init_seed)
    : h_(h),
      dim_(cfg.hiarm_dim),
      heads_(cfg.hiarm_heads),
      k_sparse_(cfg.codebook_k_sparse),
      k_dense_(cfg.codebook_k_dense),
      single_pass_(cfg.hiarm_single_pass) {
  Rng rng = Rng::derive(init_seed, 0x41A9);
  int cdim = cfg.codebook_dim;
  int slots = 1 + h_.r;
  int max_seq = 1 + h_.j_sparse * (1 + h_.r);  // long enough for the reference decoder

  pc_ = nn::Linear::create(ps, "pc", 2 * h_.j_sparse, dim_, rng);
  start_emb_ = ps.add("start_emb", 1, dim_, 0.02, rng);
  emb_s_ = nn::Linear::create(ps, "emb_s", cdim, dim_, rng);
  emb_d_ = nn::Linear::create(ps, "emb_d", cdim, dim_, rng);
  pos_lsab_ = ps.add("pos_lsab", slots, dim_, 0.02, rng);
  pos_gcsab_ = ps.add("pos_gcsab", max_seq, dim_, 0.02, rng);
  pos_ph_ = ps.add("pos_ph", slots, dim_, 0.02, rng);
  for (int b = 0; b < cfg.lsab_blocks; ++b)
    lsab_.push_back(nn::AttentionBlock::create(ps, "lsab" + std::to_string(b), dim_, heads_,
                                               2 * dim_, rng));
  for (int b = 0; b < cfg.gcsab_blocks; ++b)
    gcsab_.push_back(nn::AttentionBlock::create(ps, "gcsab" + std::to_string(b), dim_, heads_,
                                                2 * dim_, rng));
  for (int b = 0; b < cfg.ph_blocks; ++b)
    ph_.push_back(nn::AttentionBlock::create(ps, "ph" + std::to_string(b), dim_, heads_,
                                             2 * dim_, rng));
  head_s_ = nn::Linear::create(ps, "head_s", dim_, k_sparse_, rng);
  head_d_ = nn::Linear::create(ps, "head_d", dim_, k_dense_, rng);
}

HiarmModel::TeacherOut HiarmModel::teacher_forward(Graph& g, const Mat& x_s,
                                                   const TokenGrid& grid, const Codebook& cs,
                                                   const Codebook& cd, double dropout_rate,
                                                   Rng* rng, bool wg) const {
  validate_grid(grid, h_, cs.K(), cd.K());
  if (x_s.rows() != h_.j_sparse || x_s.cols() != 2)
    throw DomainError("conditioning pose must be j_sparse x 2");
  int Js = h_.j_sparse, r = h_.r;

  Mat xs_flat(1, 2 * Js);
  for (int i = 0; i < Js; ++i) {
    xs_flat(0, 2 * i) = x_s(i, 0);
    xs_flat(0, 2 * i + 1) = x_s(i, 1);
  }

  Var pos_g = ps.bind(g, pos_gcsab_, wg);
  Var pos_l = ps.bind(g, pos_lsab_, wg);
  Var pos_p = ps.bind(g, pos_ph_, wg);

  auto embed_s = [&](int q) { return emb_s_.apply(g, ps, g.constant(cs.entries.row(q)), wg); };
  auto embed_d = [&](int q) { return emb_d_.apply(g, ps, g.constant(cd.entries.row(q)), wg); };

  std::vector<Var> seq_rows;
  Var g0 = pc_.apply(g, ps, g.constant(xs_flat), wg);
  seq_rows.push_back(nn::add(g, g0, nn::slice_rows(g, pos_g, 0, 1)));

  for (int t = 0; t + 1 < Js; ++t) {
    std::vector<Var> rows;
    rows.push_back(embed_s(grid.q_s[t]));
    for (int k = 0; k < r; ++k) rows.push_back(embed_d(grid.q_d[t][k]));
    Var pair = nn::add(g, nn::concat_rows(g, rows), pos_l);
    for (const auto& b : lsab_) pair = b.apply(g, ps, pair, false, dropout_rate, rng, wg);
    Var summary = nn::mean_rows(g, pair);
    seq_rows.push_back(nn::add(g, summary, nn::slice_rows(g, pos_g, t + 1, 1)));
  }

  Var seq = nn::concat_rows(g, seq_rows);
  for (const auto& b : gcsab_) seq = b.apply(g, ps, seq, true, dropout_rate, rng, wg);

  std::vector<Var> sparse_rows, dense_rows;
  for (int t = 0; t < Js; ++t) {
    Var h_t = nn::slice_rows(g, seq, t, 1);
    Var cond_prev = (t == 0) ? ps.bind(g, start_emb_, wg) : embed_s(grid.q_s[t - 1]);

    std::vector<Var> in1;
    in1.push_back(h_t);
    for (int k = 0; k < r; ++k) in1.push_back(cond_prev);
    Var p1 = nn::add(g, nn::concat_rows(g, in1), pos_p);
    for (const auto& b : ph_) p1 = b.apply(g, ps, p1, false, dropout_rate, rng, wg);
    sparse_rows.push_back(head_s_.apply(g, ps, nn::slice_rows(g, p1, 0, 1), wg));

    Var dense_src = p1;
    if (!single_pass_) {
      Var cond_cur = embed_s(grid.q_s[t]);
      std::vector<Var> in2;
      in2.push_back(h_t);
      for (int k = 0; k < r; ++k) in2.push_back(cond_cur);
      Var p2 = nn::add(g, nn::concat_rows(g, in2), pos_p);
      for (const auto& b : ph_) p2 = b.apply(g, ps, p2, false, dropout_rate, rng, wg);
      dense_src = p2;
    }
    dense_rows.push_back(head_d_.apply(g, ps, nn::slice_rows(g, dense_src, 1, r), wg));
  }

  TeacherOut out;
  out.sparse_logits = nn::concat_rows(g, sparse_rows);
  out.dense_logits = nn::concat_rows(g, dense_rows);
  return out;
}

// ---------------------------------------------------------------------------

Mat HiarmModel::embed_sparse_eval(int q, const Codebook& cs) const {
  return emb_s_.apply_eval(ps, cs.entries.row(q));
}
Mat HiarmModel::embed_dense_eval(int q, const Codebook& cd) const {
  return emb_d_.apply_eval(ps, cd.entries.row(q));
}

Mat HiarmModel::lsab_summary_eval(const Mat& pair_embs) const {
  Mat x = pair_embs + ps.value(pos_lsab_);
  for (const auto& b : lsab_) x = b.apply_eval(ps, x, false);
  return x.colwise().mean();
}

Mat HiarmModel::ph_outputs_eval(const Mat& h_row, const Mat& cond) const {
  Mat x(1 + h_.r, dim_);
  x.row(0) = h_row.row(0);
  for (int k = 0; k < h_.r; ++k) x.row(1 + k) = cond.row(0);
  x += ps.value(pos_ph_);
  for (const auto& b : ph_) x = b.apply_eval(ps, x, false);
  return x;
}

int HiarmModel::argmax_row(const Eigen::RowVectorXd& v) const {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

namespace {

// Shared backbone state for the two decode paths.
struct BackboneState {
  std::vector<nn::AttentionBlock::Cache> caches;
  Mat history;  // full-recompute path accumulates input rows here
  bool use_cache = true;
};

}  // namespace

TokenGrid HiarmModel::generate(const Mat& x_s, const Codebook& cs, const Codebook& cd,
                               GenStats* stats, bool use_cache) const {
  if (x_s.rows() != h_.j_sparse || x_s.cols() != 2)
    throw DomainError("conditioning pose must be j_sparse x 2");
  int Js = h_.j_sparse, r = h_.r;
  const Mat& pos_g = ps.value(pos_gcsab_);

  BackboneState bb;
  bb.use_cache = use_cache;
  bb.caches.resize(gcsab_.size());
  auto push = [&](const Mat& row) -> Mat {
    if (bb.use_cache) {
      Mat cur = row;
      for (size_t b = 0; b < gcsab_.size(); ++b)
        cur = gcsab_[b].apply_incremental(ps, bb.caches[b], cur);
      return cur;
    }
    if (bb.history.rows() == 0)
      bb.history = row;
    else {
      bb.history.conservativeResize(bb.history.rows() + 1, Eigen::NoChange);
      bb.history.row(bb.history.rows() - 1) = row.row(0);
    }
    Mat cur = bb.history;
    for (const auto& b : gcsab_) cur = b.apply_eval(ps, cur, true);
    return cur.row(cur.rows() - 1);
  };

  Mat xs_flat(1, 2 * Js);
  for (int i = 0; i < Js; ++i) {
    xs_flat(0, 2 * i) = x_s(i, 0);
    xs_flat(0, 2 * i + 1) = x_s(i, 1);
  }

  TokenGrid grid;
  Mat cond = ps.value(start_emb_);
  Mat next_in = pc_.apply_eval(ps, xs_flat) + pos_g.row(0);

  for (int t = 0; t < Js; ++t) {
    Mat h_last = push(next_in);
    if (stats) ++stats->gcsab_steps;

    Mat p1 = ph_outputs_eval(h_last, cond);
    if (stats) ++stats->ph_substeps;
    Eigen::RowVectorXd slog = head_s_.apply_eval(ps, p1.row(0)).row(0);
    if (!slog.allFinite()) throw NumericError("generation produced non-finite sparse logits");
    int qs = argmax_row(slog);
    grid.q_s.push_back(qs);
    Mat cond_cur = embed_sparse_eval(qs, cs);

    Mat dense_src = p1;
    if (!single_pass_) {
      dense_src = ph_outputs_eval(h_last, cond_cur);
      if (stats) ++stats->ph_substeps;
    }
    std::vector<int> qd;
    for (int k = 0; k < r; ++k) {
      Eigen::RowVectorXd dlog = head_d_.apply_eval(ps, dense_src.row(1 + k)).row(0);
      if (!dlog.allFinite()) throw NumericError("generation produced non-finite dense logits");
      qd.push_back(argmax_row(dlog));
    }
    grid.q_d.push_back(std::move(qd));

    if (t + 1 < Js) {
      Mat pair(1 + r, dim_);
      pair.row(0) = cond_cur.row(0);
      for (int k = 0; k < r; ++k)
        pair.row(1 + k) = embed_dense_eval(grid.q_d[t][k], cd).row(0);
      next_in = lsab_summary_eval(pair) + pos_g.row(t + 1);
    }
    cond = cond_cur;
  }
  return grid;
}

TokenGrid HiarmModel::generate_reference(const Mat& x_s, const Codebook& cs, const Codebook& cd,
                                         GenStats* stats) const {
  int Js = h_.j_sparse, r = h_.r;
  const Mat& pos_g = ps.value(pos_gcsab_);

  std::vector<nn::AttentionBlock::Cache> caches(gcsab_.size());
  auto push = [&](const Mat& row) -> Mat {
    Mat cur = row;
    for (size_t b = 0; b < gcsab_.size(); ++b)
      cur = gcsab_[b].apply_incremental(ps, caches[b], cur);
    if (stats) ++stats->gcsab_steps;
    return cur;
  };

  Mat xs_flat(1, 2 * Js);
  for (int i = 0; i < Js; ++i) {
    xs_flat(0, 2 * i) = x_s(i, 0);
    xs_flat(0, 2 * i + 1) = x_s(i, 1);
  }

  TokenGrid grid;
  Mat cond = ps.value(start_emb_);
  int pos_idx = 0;
  Mat h_last = push(pc_.apply_eval(ps, xs_flat) + pos_g.row(pos_idx++));

  for (int t = 0; t < Js; ++t) {
    Mat p = ph_outputs_eval(h_last, cond);
    if (stats) ++stats->ph_substeps;
    int qs = argmax_row(head_s_.apply_eval(ps, p.row(0)).row(0));
    grid.q_s.push_back(qs);
    Mat cond_cur = embed_sparse_eval(qs, cs);
    h_last = push(cond_cur + pos_g.row(pos_idx++));

    std::vector<int> qd;
    for (int k = 0; k < r; ++k) {
      Mat pk = ph_outputs_eval(h_last, cond_cur);
      if (stats) ++stats->ph_substeps;
      int q = argmax_row(head_d_.apply_eval(ps, pk.row(1 + k)).row(0));
      qd.push_back(q);
      if (t + 1 < Js || k + 1 < r)
        h_last = push(embed_dense_eval(q, cd) + pos_g.row(pos_idx++));
    }
    grid.q_d.push_back(std::move(qd));
    cond = cond_cur;
  }
  return grid;
}

// ---------------------------------------------------------------------------

Var stage2_loss(Graph& g, const HiarmModel::TeacherOut& out, const TokenGrid& grid,
                double lambda_d, double* ce_sparse, double* ce_dense) {
  std::vector<int> dense_labels;
  for (const auto& row : grid.q_d)
    for (int q : row) dense_labels.push_back(q);
  Var ce_s = nn::cross_entropy_rows(g, out.sparse_logits, grid.q_s);
  Var ce_d = nn::cross_entropy_rows(g, out.dense_logits, dense_labels);
  if (ce_sparse) *ce_sparse = ce_s.val()(0, 0);
  if (ce_dense) *ce_dense = ce_d.val()(0, 0);
  return nn::add(g, ce_s, nn::scale(g, ce_d, lambda_d));
}

Stage2Result train_stage2(HiarmModel& m, nn::AdamW& opt, const std::vector<NormSample>& data,
                          const std::vector<TokenGrid>& targets, const MsstModel& msst,
                          const RunConfig& cfg, int epoch_begin, int epoch_end) {
  if (data.size() != targets.size()) throw DomainError("data/target count mismatch");
  if (data.empty()) throw DomainError("train_stage2: empty dataset");
  int n = static_cast<int>(data.size());
  int batch = std::min(cfg.hiarm_batch, n);
  int steps_per_epoch = (n + batch - 1) / batch;
  int total_iters = cfg.hiarm_epochs * steps_per_epoch;

  nn::TrainSchedule sched;
  sched.peak_lr = cfg.hiarm_lr;
  sched.weight_decay = cfg.hiarm_weight_decay;
  sched.warmup_iters = std::min(100, total_iters / 10);
  sched.total_iters = total_iters;
  sched.shape = nn::TrainSchedule::Shape::kCosine;
  sched.validate();

  Stage2Result result;
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

  for (int epoch = epoch_begin; epoch < epoch_end; ++epoch) {
    Rng erng = Rng::derive(static_cast<uint64_t>(cfg.train_seed), 0x57A6E2,
                           static_cast<uint64_t>(epoch));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    erng.shuffle(order);

    double sum_s = 0, sum_d = 0;
    for (int b0 = 0; b0 < n; b0 += batch) {
      int bs = std::min(batch, n - b0);
      nn::Graph g;
      Var loss_sum;
      bool bad = false;
      for (int i = 0; i < bs; ++i) {
        int idx = order[b0 + i];
        Rng srng = Rng::derive(static_cast<uint64_t>(cfg.train_seed), 0xD0,
                               static_cast<uint64_t>(epoch), static_cast<uint64_t>(idx));
        Mat xs = data[idx].x_s;
        if (srng.uniform() < cfg.cond_occlude_prob) {
          double ratio = srng.uniform(0.0, cfg.cond_occlude_max_ratio);
          xs = occlude(xs, OccludeMode::kMask, ratio, srng).pose;
        }
        auto out = m.teacher_forward(g, xs, targets[idx], msst.cb_s, msst.cb_d,
                                     cfg.hiarm_dropout, &srng, true);
        double cs = 0, cd2 = 0;
        Var loss = stage2_loss(g, out, targets[idx], cfg.lambda_d, &cs, &cd2);
        if (!std::isfinite(cs) || !std::isfinite(cd2)) {
          bad = true;
          break;
        }
        sum_s += cs;
        sum_d += cd2;
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

    Stage2EpochMetrics em;
    em.epoch = epoch;
    em.ce_sparse = sum_s / n;
    em.ce_dense = sum_d / n;
    em.total = em.ce_sparse + cfg.lambda_d * em.ce_dense;
    result.epochs.push_back(em);
    take_snapshot();
  }
  return result;
}

Stage2EpochMetrics eval_stage2(const HiarmModel& m, const std::vector<NormSample>& data,
                               const std::vector<TokenGrid>& targets, const MsstModel& msst,
                               const RunConfig& cfg) {
  if (data.size() != targets.size()) throw DomainError("data/target count mismatch");
  Stage2EpochMetrics em;
  for (size_t i = 0; i < data.size(); ++i) {
    nn::Graph g;
    auto out = m.teacher_forward(g, data[i].x_s, targets[i], msst.cb_s, msst.cb_d, 0.0, nullptr,
                                 false);
    double cs = 0, cd = 0;
    stage2_loss(g, out, targets[i], cfg.lambda_d, &cs, &cd);
    em.ce_sparse += cs;
    em.ce_dense += cd;
  }
  em.ce_sparse /= static_cast<double>(data.size());
  em.ce_dense /= static_cast<double>(data.size());
  em.total = em.ce_sparse + cfg.lambda_d * em.ce_dense;
  return em;
}

}  // namespace hipart
