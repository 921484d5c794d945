#include <doctest.h>

#include <cmath>

#include "hipart/optim.hpp"

using namespace hipart;
using namespace hipart::nn;

namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("primitive op gradients match finite differences") {
  Rng init(101);
  ParamStore ps;
  ps.add("a", 3, 4, 0.5, init);
  ps.add("b", 4, 3, 0.5, init);
  ps.add("bias", 1, 3, 0.5, init);
  ps.add_ones("gain", 1, 3);

  LossFn fn = [&](ParamStore& p, std::vector<Mat>* grads) {
    Graph g;
    Var a = p.bind(g, 0), b = p.bind(g, 1), bias = p.bind(g, 2), gain = p.bind(g, 3);
    Var h = gelu(g, add_rowvec(g, matmul(g, a, b), bias));
    h = layer_norm(g, h, gain, bias);
    Var sm = softmax_rows(g, h);
    Var loss = add(g, sum_sq(g, hadamard(g, sm, h)),
                   scale(g, sum_sq(g, l2_normalize_rows(g, transpose(g, h))), 0.5));
    if (grads) {
      g.backward(loss);
      for (const auto& [id, gr] : g.param_grads()) (*grads)[id] += *gr;
    }
    return loss.val()(0, 0);
  };

  Rng pick(7);
  GradCheckReport rep = grad_check(fn, ps, 1e-5, 1e-3, pick, 64);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("cross entropy and slicing gradients match finite differences") {
  Rng init(55);
  ParamStore ps;
  ps.add("logits_src", 4, 6, 0.8, init);

  std::vector<int> labels = {2, 0, 1};
  LossFn fn = [&](ParamStore& p, std::vector<Mat>* grads) {
    Graph g;
    Var x = p.bind(g, 0);
    Var top = slice_rows(g, x, 0, 3);
    Var left = slice_cols(g, top, 0, 5);
    Var gathered = gather_rows(g, x, {3, 1, 3});
    Var loss = add(g, cross_entropy_rows(g, left, labels),
                   sum_sq(g, mean_rows(g, gathered)));
    if (grads) {
      g.backward(loss);
      for (const auto& [id, gr] : g.param_grads()) (*grads)[id] += *gr;
    }
    return loss.val()(0, 0);
  };

  Rng pick(8);
  GradCheckReport rep = grad_check(fn, ps, 1e-5, 1e-3, pick, 24);
  CHECK(rep.pass);
}

TEST_CASE("straight_through passes the gradient and stop_gradient blocks it") {
  ParamStore ps;
  Rng init(9);
  ps.add("z", 2, 3, 1.0, init);
  Graph g;
  Var z = ps.bind(g, 0);
  Mat q = Mat::Constant(2, 3, 7.0);
  Var st = straight_through(g, z, q);
  CHECK((st.val() - q).norm() == 0.0);
  Var loss = sum_sq(g, st);
  g.backward(loss);
  // d/dz sum(q^2) through the straight-through estimator = 2q
  CHECK((g.param_grads()[0].second->array() - 14.0).abs().maxCoeff() < 1e-12);

  Graph g2;
  Var z2 = ps.bind(g2, 0);
  // gradient flows only through the direct branch of z + sg(z)
  g2.backward(sum_sq(g2, add(g2, stop_gradient(g2, z2), z2)));
  Mat expect = 4.0 * ps.value(0);
  CHECK((*g2.param_grads()[0].second - expect).norm() < 1e-12);
}

TEST_CASE("mixer block gradients and train/eval agreement") {
  Rng init(31);
  ParamStore ps;
  MixerBlock blk = MixerBlock::create(ps, "mix", 3, 4, 6, 8, init);
  Mat x = random_mat(3, 4, init);

  Graph g;
  Var out = blk.apply(g, ps, g.constant(x));
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 4);
  Mat ev = blk.apply_eval(ps, x);
  CHECK((out.val() - ev).norm() < 1e-12);

  LossFn fn = [&](ParamStore& p, std::vector<Mat>* grads) {
    Graph gg;
    Var loss = sum_sq(gg, blk.apply(gg, p, gg.constant(x)));
    if (grads) {
      gg.backward(loss);
      for (const auto& [id, gr] : gg.param_grads()) (*grads)[id] += *gr;
    }
    return loss.val()(0, 0);
  };
  Rng pick(12);
  GradCheckReport rep = grad_check(fn, ps, 1e-5, 1e-3, pick, 64);
  CHECK(rep.pass);
}

TEST_CASE("attention block gradients and train/eval agreement") {
  Rng init(47);
  ParamStore ps;
  AttentionBlock blk = AttentionBlock::create(ps, "attn", 4, 2, 8, init);
  Mat x = random_mat(3, 4, init);

  for (bool causal : {false, true}) {
    Graph g;
    Var out = blk.apply(g, ps, g.constant(x), causal);
    Mat ev = blk.apply_eval(ps, x, causal);
    CHECK((out.val() - ev).norm() < 1e-12);
  }

  LossFn fn = [&](ParamStore& p, std::vector<Mat>* grads) {
    Graph gg;
    Var loss = sum_sq(gg, blk.apply(gg, p, gg.constant(x), true));
    if (grads) {
      gg.backward(loss);
      for (const auto& [id, gr] : gg.param_grads()) (*grads)[id] += *gr;
    }
    return loss.val()(0, 0);
  };
  Rng pick(13);
  GradCheckReport rep = grad_check(fn, ps, 1e-5, 1e-3, pick, 64);
  CHECK(rep.pass);
}

TEST_CASE("causal attention does not leak future positions") {
  Rng init(21);
  ParamStore ps;
  AttentionBlock blk = AttentionBlock::create(ps, "attn", 8, 2, 16, init);
  Mat x = random_mat(5, 8, init);
  Mat base = blk.apply_eval(ps, x, true);
  for (int j = 1; j < 5; ++j) {
    Mat xp = x;
    xp.row(j).array() += 3.5;
    Mat out = blk.apply_eval(ps, xp, true);
    for (int i = 0; i < j; ++i) CHECK((out.row(i) - base.row(i)).norm() == 0.0);
    CHECK((out.row(j) - base.row(j)).norm() > 0.0);
  }
}

TEST_CASE("incremental decode matches the full causal pass") {
  Rng init(77);
  ParamStore ps;
  AttentionBlock blk = AttentionBlock::create(ps, "attn", 8, 4, 16, init);
  Mat x = random_mat(6, 8, init);
  Mat full = blk.apply_eval(ps, x, true);
  AttentionBlock::Cache cache;
  for (int i = 0; i < 6; ++i) {
    Mat row = blk.apply_incremental(ps, cache, x.row(i));
    CHECK((row - full.row(i)).norm() < 1e-9);
  }
}

TEST_CASE("non-causal attention is permutation equivariant") {
  Rng init(88);
  ParamStore ps;
  AttentionBlock blk = AttentionBlock::create(ps, "attn", 6, 3, 12, init);
  Mat x = random_mat(4, 6, init);
  std::vector<int> perm = {2, 0, 3, 1};
  Mat xp(4, 6);
  for (int i = 0; i < 4; ++i) xp.row(i) = x.row(perm[i]);
  Mat out = blk.apply_eval(ps, x, false);
  Mat outp = blk.apply_eval(ps, xp, false);
  for (int i = 0; i < 4; ++i) CHECK((outp.row(i) - out.row(perm[i])).norm() < 1e-9);
}

TEST_CASE("length-one sequences work in both paths") {
  Rng init(5);
  ParamStore ps;
  AttentionBlock blk = AttentionBlock::create(ps, "attn", 4, 2, 8, init);
  Mat x = random_mat(1, 4, init);
  Mat a = blk.apply_eval(ps, x, true);
  Mat b = blk.apply_eval(ps, x, false);
  CHECK((a - b).norm() < 1e-12);
  AttentionBlock::Cache cache;
  Mat c = blk.apply_incremental(ps, cache, x);
  CHECK((c - a).norm() < 1e-9);
}

TEST_CASE("causal mask values") {
  Mat m = causal_mask(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (j <= i)
        CHECK(m(i, j) == 0.0);
      else
        CHECK(std::isinf(m(i, j)));
    }
}

TEST_CASE("dropout is deterministic under the same rng stream") {
  Mat x = Mat::Constant(8, 8, 1.0);
  Rng r1(42), r2(42);
  Graph g1, g2;
  Mat a = dropout(g1, g1.constant(x), 0.5, r1).val();
  Mat b = dropout(g2, g2.constant(x), 0.5, r2).val();
  CHECK((a - b).norm() == 0.0);
  // kept entries are rescaled by 1/(1-rate)
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) CHECK((a(i, j) == 0.0 || a(i, j) == doctest::Approx(2.0)));
}

TEST_CASE("train schedule values") {
  TrainSchedule s;
  s.peak_lr = 1e-3;
  s.warmup_iters = 10;
  s.total_iters = 110;
  s.floor_lr = 1e-5;
  s.validate();
  CHECK(s.lr(0) == doctest::Approx(1e-4));
  CHECK(s.lr(9) == doctest::Approx(1e-3));
  CHECK(s.lr(10) == doctest::Approx(1e-3));
  CHECK(s.lr(60) == doctest::Approx(1e-5 + 0.5 * (1e-3 - 1e-5)));
  CHECK(s.lr(110) == doctest::Approx(1e-5).epsilon(1e-9));

  TrainSchedule m;
  m.peak_lr = 1e-3;
  m.shape = TrainSchedule::Shape::kMultiplicative;
  m.mult_factor = 0.96;
  m.mult_period_iters = 5;
  m.total_iters = 100;
  m.validate();
  CHECK(m.lr(0) == doctest::Approx(1e-3));
  CHECK(m.lr(4) == doctest::Approx(1e-3));
  CHECK(m.lr(10) == doctest::Approx(1e-3 * 0.96 * 0.96));

  TrainSchedule bad;
  bad.warmup_iters = 5;
  bad.total_iters = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("grad_check accepts a quadratic and rejects a corrupted gradient") {
  Rng init(3);
  ParamStore ps;
  ps.add("p", 4, 4, 1.0, init);

  LossFn good = [&](ParamStore& p, std::vector<Mat>* grads) {
    double l = p.value(0).squaredNorm();
    if (grads) (*grads)[0] += 2.0 * p.value(0);
    return l;
  };
  Rng pick(4);
  CHECK(grad_check(good, ps, 1e-4, 1e-6, pick, 32).pass);

  LossFn bad = [&](ParamStore& p, std::vector<Mat>* grads) {
    double l = p.value(0).squaredNorm();
    if (grads) (*grads)[0] += 3.0 * p.value(0);
    return l;
  };
  Rng pick2(4);
  CHECK_FALSE(grad_check(bad, ps, 1e-4, 1e-6, pick2, 32).pass);
}

TEST_CASE("adamw single step hand case") {
  ParamStore ps;
  ps.add_ones("p", 1, 1);
  std::vector<Mat> grads = {Mat::Constant(1, 1, 0.5)};
  TrainSchedule s;
  s.peak_lr = 0.01;
  s.warmup_iters = 0;
  s.total_iters = 10;
  s.floor_lr = 0.01;
  s.weight_decay = 0.1;
  AdamW opt;
  opt.step(ps, grads, s);
  // decoupled decay then the adam step with mhat=0.5, vhat=0.25
  double expect = (1.0 - 0.01 * 0.1 * 1.0) - 0.01 * 0.5 / (0.5 + 1e-8);
  CHECK(ps.value(0)(0, 0) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(opt.iteration() == 1);

  std::vector<Mat> badg = {Mat::Constant(1, 1, std::nan(""))};
  CHECK_THROWS_AS(opt.step(ps, badg, s), NumericError);
}

TEST_CASE("param store f32 rounding is idempotent") {
  Rng init(6);
  ParamStore ps;
  ps.add("p", 3, 3, 1.0, init);
  ps.value(0)(0, 0) = 0.1;  // not representable in f32
  ps.round_to_f32();
  Mat once = ps.value(0);
  CHECK(once(0, 0) == doctest::Approx(0.1));
  CHECK(once(0, 0) != 0.1);
  ps.round_to_f32();
  CHECK((ps.value(0) - once).norm() == 0.0);
}
