#include <doctest.h>

#include <cmath>

#include "hipart/hiarm.hpp"

using namespace hipart;
using nn::Graph;
using nn::Var;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg = parse_config("");
  cfg.j_sparse = 4;
  cfg.j_dense = 12;
  cfg.j_fine = 24;
  cfg.num_actions = 4;
  cfg.msst_dim = 16;
  cfg.msst_ed_dim = 12;
  cfg.codebook_k_sparse = 8;
  cfg.codebook_k_dense = 8;
  cfg.codebook_dim = 8;
  cfg.msst_enc_blocks = 1;
  cfg.msst_dec_blocks = 1;
  cfg.hiarm_dim = 16;
  cfg.hiarm_heads = 2;
  cfg.lsab_blocks = 1;
  cfg.gcsab_blocks = 2;
  cfg.ph_blocks = 1;
  cfg.hiarm_batch = 8;
  cfg.hiarm_epochs = 2;
  cfg.hiarm_dropout = 0.0;
  cfg.cond_occlude_prob = 0.0;
  return cfg;
}

Codebook random_codebook(int k, int d, uint64_t seed) {
  Codebook c;
  c.allocate(k, d);
  Rng rng(seed);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) c.entries(i, j) = rng.normal();
  c.initialized = true;
  return c;
}

MsstModel::Tokens random_tokens(const SkeletonHierarchy& h, int ks, int kd, Rng& rng) {
  MsstModel::Tokens t;
  for (int i = 0; i < h.j_sparse; ++i)
    t.q_s.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(ks))));
  for (int j = 0; j < h.j_dense; ++j)
    t.q_d.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(kd))));
  return t;
}

Mat random_xs(const SkeletonHierarchy& h, Rng& rng) {
  Mat x(h.j_sparse, 2);
  for (int i = 0; i < h.j_sparse; ++i)
    for (int c = 0; c < 2; ++c) x(i, c) = rng.uniform(-1, 1);
  return x;
}

NormSample make_norm_sample(const SkeletonHierarchy& h, Rng& rng, int actions) {
  NormSample s;
  s.x_f = Mat(h.j_fine, 2);
  for (int i = 0; i < h.j_fine; ++i)
    for (int c = 0; c < 2; ++c) s.x_f(i, c) = rng.uniform(-1, 1);
  s.x_d = Mat(h.j_dense, 2);
  for (int d = 0; d < h.j_dense; ++d)
    s.x_d.row(d) = 0.5 * (s.x_f.row(h.part_map_df[d][0]) + s.x_f.row(h.part_map_df[d][1]));
  s.x_s = Mat(h.j_sparse, 2);
  for (int p = 0; p < h.j_sparse; ++p) {
    Eigen::RowVector2d acc = Eigen::RowVector2d::Zero();
    for (int d : h.part_map_sd[p]) acc += s.x_d.row(d);
    s.x_s.row(p) = acc / static_cast<double>(h.part_map_sd[p].size());
  }
  s.action = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(actions)));
  return s;
}

}  // namespace

TEST_CASE("token grid round trip follows the generation order") {
  SkeletonHierarchy h = build_hierarchy({16, 48, 96, {}});
  Rng rng(41);
  MsstModel::Tokens t = random_tokens(h, 32, 32, rng);
  TokenGrid grid = grid_from_tokens(h, t);
  REQUIRE(grid.q_s.size() == 16);
  for (int i = 0; i < 16; ++i) {
    int part = h.gen_order[i];
    CHECK(grid.q_s[i] == t.q_s[part]);
    REQUIRE(grid.q_d[i].size() == static_cast<size_t>(h.r));
    for (int k = 0; k < h.r; ++k) CHECK(grid.q_d[i][k] == t.q_d[h.part_map_sd[part][k]]);
  }
  MsstModel::Tokens back = tokens_from_grid(h, grid);
  CHECK(back.q_s == t.q_s);
  CHECK(back.q_d == t.q_d);
  validate_grid(grid, h, 32, 32);

  TokenGrid bad = grid;
  bad.q_s[3] = 32;
  CHECK_THROWS_AS(validate_grid(bad, h, 32, 32), DomainError);
  bad = grid;
  bad.q_d[2][1] = -1;
  CHECK_THROWS_AS(validate_grid(bad, h, 32, 32), DomainError);
}

TEST_CASE("teacher forward shapes and causal structure") {
  RunConfig cfg = tiny_cfg();
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  HiarmModel m(cfg, h, 11);
  Codebook cs = random_codebook(8, 8, 1), cd = random_codebook(8, 8, 2);
  Rng rng(3);
  Mat xs = random_xs(h, rng);
  TokenGrid grid = grid_from_tokens(h, random_tokens(h, 8, 8, rng));

  Graph g;
  auto out = m.teacher_forward(g, xs, grid, cs, cd, 0.0, nullptr, false);
  CHECK(out.sparse_logits.rows() == 4);
  CHECK(out.sparse_logits.cols() == 8);
  CHECK(out.dense_logits.rows() == 12);
  CHECK(out.dense_logits.cols() == 8);

  // changing the last pair's tokens must not move earlier logits
  TokenGrid pert = grid;
  pert.q_s[3] = (pert.q_s[3] + 1) % 8;
  for (int k = 0; k < h.r; ++k) pert.q_d[3][k] = (pert.q_d[3][k] + 3) % 8;
  Graph g2;
  auto out2 = m.teacher_forward(g2, xs, pert, cs, cd, 0.0, nullptr, false);
  for (int i = 0; i < 4; ++i)
    CHECK((out2.sparse_logits.val().row(i) - out.sparse_logits.val().row(i)).norm() == 0.0);
  for (int i = 0; i < 3 * h.r; ++i)
    CHECK((out2.dense_logits.val().row(i) - out.dense_logits.val().row(i)).norm() == 0.0);
  // the last pair's dense slots see its new sparse token
  double moved = 0;
  for (int k = 0; k < h.r; ++k)
    moved += (out2.dense_logits.val().row(3 * h.r + k) -
              out.dense_logits.val().row(3 * h.r + k))
                 .norm();
  CHECK(moved > 0.0);

  // changing an earlier pair moves later sparse logits
  TokenGrid pert0 = grid;
  pert0.q_s[0] = (pert0.q_s[0] + 1) % 8;
  Graph g3;
  auto out3 = m.teacher_forward(g3, xs, pert0, cs, cd, 0.0, nullptr, false);
  CHECK((out3.sparse_logits.val().row(0) - out.sparse_logits.val().row(0)).norm() == 0.0);
  CHECK((out3.sparse_logits.val().bottomRows(3) - out.sparse_logits.val().bottomRows(3)).norm() >
        0.0);
}

TEST_CASE("incremental and full-recompute decodes agree") {
  RunConfig cfg = tiny_cfg();
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  HiarmModel m(cfg, h, 13);
  Codebook cs = random_codebook(8, 8, 5), cd = random_codebook(8, 8, 6);
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    Mat xs = random_xs(h, rng);
    TokenGrid a = m.generate(xs, cs, cd, nullptr, true);
    TokenGrid b = m.generate(xs, cs, cd, nullptr, false);
    CHECK(a.q_s == b.q_s);
    CHECK(a.q_d == b.q_d);
  }
}

TEST_CASE("decode step counters") {
  RunConfig cfg = tiny_cfg();
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  HiarmModel m(cfg, h, 13);
  Codebook cs = random_codebook(8, 8, 5), cd = random_codebook(8, 8, 6);
  Rng rng(19);
  Mat xs = random_xs(h, rng);

  HiarmModel::GenStats gs;
  m.generate(xs, cs, cd, &gs, true);
  CHECK(gs.gcsab_steps == h.j_sparse);
  CHECK(gs.ph_substeps == 2 * h.j_sparse);

  HiarmModel::GenStats ref;
  m.generate_reference(xs, cs, cd, &ref);
  CHECK(ref.ph_substeps == (1 + h.r) * h.j_sparse);
  CHECK(ref.gcsab_steps == (1 + h.r) * h.j_sparse);

  RunConfig single = cfg;
  single.hiarm_single_pass = true;
  HiarmModel ms(single, h, 13);
  HiarmModel::GenStats sp;
  ms.generate(xs, cs, cd, &sp, true);
  CHECK(sp.ph_substeps == h.j_sparse);
}

TEST_CASE("stage2 loss closed forms") {
  SkeletonHierarchy h = build_hierarchy({4, 12, 24, {}});
  Rng rng(23);
  TokenGrid grid = grid_from_tokens(h, random_tokens(h, 8, 8, rng));

  Graph g;
  HiarmModel::TeacherOut uniform;
  uniform.sparse_logits = g.constant(Mat::Zero(4, 8));
  uniform.dense_logits = g.constant(Mat::Zero(12, 8));
  double ces = 0, ced = 0;
  Var loss = stage2_loss(g, uniform, grid, 1.5, &ces, &ced);
  CHECK(ces == doctest::Approx(std::log(8.0)).epsilon(1e-9));
  CHECK(ced == doctest::Approx(std::log(8.0)).epsilon(1e-9));
  CHECK(loss.val()(0, 0) == doctest::Approx((1.0 + 1.5) * std::log(8.0)).epsilon(1e-9));

  Graph g0;
  double ces0 = 0, ced0 = 0;
  Var sparse_only = stage2_loss(g0, {g0.constant(Mat::Zero(4, 8)), g0.constant(Mat::Zero(12, 8))},
                                grid, 0.0, &ces0, &ced0);
  CHECK(sparse_only.val()(0, 0) == doctest::Approx(std::log(8.0)).epsilon(1e-9));

  Graph g2;
  Mat ps_logits = Mat::Zero(4, 8), pd_logits = Mat::Zero(12, 8);
  for (int i = 0; i < 4; ++i) ps_logits(i, grid.q_s[i]) = 60.0;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < h.r; ++k) pd_logits(i * h.r + k, grid.q_d[i][k]) = 60.0;
  HiarmModel::TeacherOut perfect;
  perfect.sparse_logits = g2.constant(ps_logits);
  perfect.dense_logits = g2.constant(pd_logits);
  double ces2 = 0, ced2 = 0;
  stage2_loss(g2, perfect, grid, 1.5, &ces2, &ced2);
  CHECK(ces2 < 1e-8);
  CHECK(ced2 < 1e-8);
}

TEST_CASE("stage2 training reduces the loss and is deterministic") {
  RunConfig cfg = tiny_cfg();
  cfg.hiarm_epochs = 3;
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  MsstModel msst(cfg, h, 5);
  Rng rng(29);
  std::vector<NormSample> data;
  for (int i = 0; i < 24; ++i) data.push_back(make_norm_sample(h, rng, cfg.num_actions));

  Mat zs(static_cast<int>(data.size()) * h.j_sparse, msst.codebook_dim());
  for (size_t i = 0; i < data.size(); ++i)
    zs.middleRows(static_cast<int>(i) * h.j_sparse, h.j_sparse) =
        msst.encode_sparse_rows(data[i].x_f);
  Rng cbrng(7);
  msst.cb_s.init_from_rows(zs, cbrng);
  Mat zd(static_cast<int>(data.size()) * h.j_dense, msst.codebook_dim());
  for (size_t i = 0; i < data.size(); ++i)
    zd.middleRows(static_cast<int>(i) * h.j_dense, h.j_dense) =
        msst.encode_dense_rows(data[i].x_f);
  msst.cb_d.init_from_rows(zd, cbrng);

  std::vector<TokenGrid> targets;
  for (const auto& s : data) targets.push_back(grid_from_tokens(h, msst.encode_tokens(s.x_f)));

  auto run = [&](HiarmModel& m) {
    nn::AdamW opt;
    return train_stage2(m, opt, data, targets, msst, cfg, 0, cfg.hiarm_epochs);
  };

  HiarmModel m1(cfg, h, 11);
  Stage2Result r1 = run(m1);
  CHECK_FALSE(r1.aborted);
  REQUIRE(r1.epochs.size() == 3);
  CHECK(r1.epochs.back().total < r1.epochs.front().total);

  HiarmModel m2(cfg, h, 11);
  Stage2Result r2 = run(m2);
  for (int i = 0; i < m1.ps.size(); ++i)
    CHECK((m1.ps.value(i) - m2.ps.value(i)).norm() == 0.0);
  CHECK(r1.epochs.back().total == r2.epochs.back().total);

  Stage2EpochMetrics ev = eval_stage2(m1, data, targets, msst, cfg);
  CHECK(ev.total == doctest::Approx(ev.ce_sparse + cfg.lambda_d * ev.ce_dense).epsilon(1e-9));
}
