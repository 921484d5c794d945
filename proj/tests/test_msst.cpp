#include <doctest.h>

#include <cmath>

#include "hipart/msst.hpp"

using namespace hipart;
using nn::Graph;
using nn::Var;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg = parse_config("");
  cfg.j_sparse = 4;
  cfg.j_dense = 12;
  cfg.j_fine = 24;
  cfg.data_n = 64;
  cfg.num_actions = 4;
  cfg.msst_dim = 16;
  cfg.msst_ed_dim = 12;
  cfg.codebook_k_sparse = 8;
  cfg.codebook_k_dense = 8;
  cfg.codebook_dim = 8;
  cfg.msst_enc_blocks = 1;
  cfg.msst_dec_blocks = 1;
  cfg.msst_batch = 16;
  cfg.msst_epochs = 2;
  cfg.msst_warmup_iters = 2;
  return cfg;
}

Mat random_xf(const SkeletonHierarchy& h, Rng& rng) {
  Mat x(h.j_fine, 2);
  for (int i = 0; i < h.j_fine; ++i)
    for (int c = 0; c < 2; ++c) x(i, c) = rng.uniform(-1, 1);
  return x;
}

NormSample make_norm_sample(const SkeletonHierarchy& h, Rng& rng, int actions) {
  NormSample s;
  s.x_f = random_xf(h, rng);
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

void seed_codebooks(MsstModel& m, const std::vector<NormSample>& data, Rng& rng) {
  Mat zs(static_cast<int>(data.size()) * m.hierarchy().j_sparse, m.codebook_dim());
  for (size_t i = 0; i < data.size(); ++i)
    zs.middleRows(static_cast<int>(i) * m.hierarchy().j_sparse, m.hierarchy().j_sparse) =
        m.encode_sparse_rows(data[i].x_f);
  m.cb_s.init_from_rows(zs, rng);
  Mat zd(static_cast<int>(data.size()) * m.hierarchy().j_dense, m.codebook_dim());
  for (size_t i = 0; i < data.size(); ++i)
    zd.middleRows(static_cast<int>(i) * m.hierarchy().j_dense, m.hierarchy().j_dense) =
        m.encode_dense_rows(data[i].x_f);
  m.cb_d.init_from_rows(zd, rng);
}

}  // namespace

TEST_CASE("quantize matches a brute force oracle") {
  Rng rng(19);
  Codebook c;
  c.allocate(8, 4);
  for (int k = 0; k < 8; ++k)
    for (int d = 0; d < 4; ++d) c.entries(k, d) = rng.normal();
  c.initialized = true;
  Mat z(50, 4);
  for (int i = 0; i < 50; ++i)
    for (int d = 0; d < 4; ++d) z(i, d) = rng.normal();

  QuantizeResult r = quantize(z, c);
  for (int i = 0; i < 50; ++i) {
    int best = -1;
    double best_d = 1e300;
    for (int k = 0; k < 8; ++k) {
      double dist = (z.row(i) - c.entries.row(k)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    CHECK(r.indices[i] == best);
    CHECK((r.zq.row(i) - c.entries.row(best)).norm() == 0.0);
  }
}

TEST_CASE("quantize tie breaks to the lowest index and rejects nan") {
  Codebook c;
  c.allocate(4, 2);
  c.entries << 1, 0, 1, 0, 0, 1, 1, 0;  // rows 0,1,3 identical
  c.initialized = true;
  Mat z(1, 2);
  z << 1, 0;
  CHECK(quantize(z, c).indices[0] == 0);
  z(0, 0) = std::nan("");
  CHECK_THROWS_AS(quantize(z, c), NumericError);
}

TEST_CASE("ema updates converge to a constant target") {
  Codebook c;
  c.allocate(2, 3);
  Rng rng(4);
  Mat seedrows(1, 3);
  seedrows << 0.3, -0.2, 0.9;
  c.init_from_rows(seedrows, rng);

  Mat v(4, 3);
  for (int i = 0; i < 4; ++i) v.row(i) << 2.0, -1.0, 0.5;
  std::vector<int> q = {0, 0, 0, 0};
  for (int it = 0; it < 2000; ++it) ema_update(c, v, q, 0.99);
  // steady state: counts -> 4, sums -> 4v, entry -> v / (1 + eps/4)
  CHECK(c.ema_counts(0) == doctest::Approx(4.0).epsilon(1e-4));
  CHECK((c.entries.row(0) - v.row(0)).norm() < 1e-3);
  CHECK(c.ema_counts(1) < 1e-3);  // unused entry decays
  for (int k = 0; k < 2; ++k) CHECK(c.ema_counts(k) >= 0.0);
}

TEST_CASE("perplexity closed forms") {
  CHECK(perplexity({5, 5, 5, 5}) == doctest::Approx(4.0));
  CHECK(perplexity({10, 0, 0, 0}) == doctest::Approx(1.0));
  CHECK(perplexity({0, 0}) == 0.0);
  CHECK(perplexity({3, 1}) < 2.0);
}

TEST_CASE("local alignment loss closed forms") {
  SkeletonHierarchy h = build_hierarchy({16, 48, 96, {}});
  // identical rows -> uniform similarities -> J_s * ln J_s
  Graph g;
  Mat zs = Mat::Ones(16, 8), zd = Mat::Ones(48, 8);
  Var loss = local_alignment_loss(g, g.constant(zs), g.constant(zd), h, 0.07);
  CHECK(loss.val()(0, 0) == doctest::Approx(16.0 * std::log(16.0)).epsilon(1e-9));

  // matched orthonormal pairs -> near-zero CE at tau = 0.07
  Graph g2;
  Mat es = Mat::Zero(16, 16), ed = Mat::Zero(48, 16);
  for (int i = 0; i < 16; ++i) es(i, i) = 1.0;
  for (int d = 0; d < 48; ++d) ed(d, part_of(h, d)) = 1.0;
  Var l2 = local_alignment_loss(g2, g2.constant(es), g2.constant(ed), h, 0.07);
  double per_row = std::log1p(15.0 * std::exp(-1.0 / 0.07));
  CHECK(l2.val()(0, 0) == doctest::Approx(16.0 * per_row).epsilon(1e-6));
  CHECK(l2.val()(0, 0) < 1e-3);

  Graph g3;
  CHECK_THROWS_AS(local_alignment_loss(g3, g3.constant(zs), g3.constant(zd), h, 0.0),
                  DomainError);
}

TEST_CASE("global alignment loss closed forms") {
  Graph g;
  Mat uniform = Mat::Zero(1, 8);
  Var l = global_alignment_loss(g, g.constant(uniform), 3);
  CHECK(l.val()(0, 0) == doctest::Approx(std::log(8.0)).epsilon(1e-9));

  Mat peaked = Mat::Zero(1, 8);
  peaked(0, 3) = 50.0;
  Graph g2;
  Var l2 = global_alignment_loss(g2, g2.constant(peaked), 3);
  CHECK(l2.val()(0, 0) < 1e-8);
}

TEST_CASE("msst forward shapes and token consistency") {
  RunConfig cfg = tiny_cfg();
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  MsstModel m(cfg, h, 5);
  Rng rng(23);
  std::vector<NormSample> data;
  for (int i = 0; i < 8; ++i) data.push_back(make_norm_sample(h, rng, cfg.num_actions));
  Rng cbrng(6);
  seed_codebooks(m, data, cbrng);

  Graph g;
  MsstModel::Forward f = m.forward(g, data[0].x_f, false);
  CHECK(f.xhat_f.rows() == h.j_fine);
  CHECK(f.xhat_f.cols() == 2);
  CHECK(f.xhat_d.rows() == h.j_dense);
  CHECK(f.pa.rows() == 1);
  CHECK(f.pa.cols() == cfg.num_actions);
  CHECK(static_cast<int>(f.q_s.size()) == h.j_sparse);
  CHECK(static_cast<int>(f.q_d.size()) == h.j_dense);
  for (int q : f.q_s) CHECK((q >= 0 && q < cfg.codebook_k_sparse));

  MsstModel::Tokens t = m.encode_tokens(data[0].x_f);
  CHECK(t.q_s == f.q_s);
  CHECK(t.q_d == f.q_d);
  MsstModel::Tokens t2 = m.encode_tokens(data[0].x_f);
  CHECK(t.q_s == t2.q_s);
  CHECK(t.q_d == t2.q_d);

  auto [xhat_d, xhat_f] = m.decode_tokens(t.q_s, t.q_d);
  CHECK(xhat_d.rows() == h.j_dense);
  CHECK(xhat_f.rows() == h.j_fine);
  CHECK((xhat_f - f.xhat_f.val()).norm() < 1e-9);
  CHECK((xhat_d - f.xhat_d.val()).norm() < 1e-9);
}

TEST_CASE("stage1 term breakdown sums to the total") {
  RunConfig cfg = tiny_cfg();
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  MsstModel m(cfg, h, 5);
  Rng rng(29);
  std::vector<NormSample> data;
  for (int i = 0; i < 4; ++i) data.push_back(make_norm_sample(h, rng, cfg.num_actions));
  Rng cbrng(7);
  seed_codebooks(m, data, cbrng);

  Stage1Weights w{0.25, 1.0, 0.3, 0.07};
  Graph g;
  MsstModel::Forward f = m.forward(g, data[1].x_f, true);
  Stage1Terms terms;
  Var loss = stage1_loss(g, m, f, data[1].x_f, data[1].x_d, data[1].action, w, &terms);
  double sum = terms.recon_f + terms.recon_d + terms.codebook + terms.commit + terms.local +
               terms.global;
  CHECK(terms.total == doctest::Approx(sum).epsilon(1e-9));
  CHECK(loss.val()(0, 0) == doctest::Approx(terms.total).epsilon(1e-12));
  CHECK(terms.recon_f > 0);
  CHECK(terms.commit >= 0);
}

TEST_CASE("stage1 training reduces the loss and is deterministic") {
  RunConfig cfg = tiny_cfg();
  cfg.msst_epochs = 3;
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  Rng rng(31);
  std::vector<NormSample> data;
  for (int i = 0; i < 32; ++i) data.push_back(make_norm_sample(h, rng, cfg.num_actions));

  auto run = [&](MsstModel& m) {
    nn::AdamW opt;
    return train_stage1(m, opt, data, cfg, 0, cfg.msst_epochs);
  };

  MsstModel m1(cfg, h, 5);
  Stage1Result r1 = run(m1);
  CHECK_FALSE(r1.aborted);
  REQUIRE(r1.epochs.size() == 3);
  CHECK(r1.epochs.back().total < r1.epochs.front().total);
  CHECK(r1.epochs.back().perplexity_s > 1.0);
  CHECK(r1.epochs.back().perplexity_d > 1.0);

  MsstModel m2(cfg, h, 5);
  Stage1Result r2 = run(m2);
  for (int i = 0; i < m1.ps.size(); ++i)
    CHECK((m1.ps.value(i) - m2.ps.value(i)).norm() == 0.0);
  CHECK((m1.cb_s.entries - m2.cb_s.entries).norm() == 0.0);
  CHECK(r1.epochs.back().total == r2.epochs.back().total);
}
