#include <doctest.h>

#include <cmath>

#include "hipart/lift.hpp"

using namespace hipart;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg = parse_config("");
  cfg.j_sparse = 4;
  cfg.j_dense = 12;
  cfg.j_fine = 24;
  cfg.lift_dim = 16;
  cfg.lift_heads = 2;
  cfg.lift_blocks = 1;
  cfg.lift_batch = 8;
  cfg.lift_epochs = 2;
  return cfg;
}

Mat random_mat(int r, int c, Rng& rng, double s = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = s * rng.normal();
  return m;
}

// Independent similarity-Procrustes residual via the standard SVD solution on
// centered point sets (rotation only, reflections excluded).
double procrustes_oracle(const Mat& pred, const Mat& gt) {
  int n = static_cast<int>(pred.rows());
  Eigen::RowVector3d mp = pred.colwise().mean(), mg = gt.colwise().mean();
  Mat p = pred.rowwise() - mp, q = gt.rowwise() - mg;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  double var_p = 0;
  for (int i = 0; i < n; ++i) {
    h += p.row(i).transpose() * q.row(i);
    var_p += p.row(i).squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1;
  Eigen::Matrix3d rot = svd.matrixV() * d * svd.matrixU().transpose();
  double scale = (svd.singularValues().asDiagonal() * d).trace() / var_p;
  double err = 0;
  for (int i = 0; i < n; ++i)
    err += (scale * (rot * p.row(i).transpose()) - q.row(i).transpose()).norm();
  return err / n;
}

}  // namespace

TEST_CASE("mpjpe hand case and translation invariance") {
  Mat gt = Mat::Zero(16, 3);
  for (int i = 0; i < 16; ++i) gt(i, 0) = 10.0 * i;
  Mat pred = gt;
  pred(5, 0) += 3.0;
  pred(5, 1) += 4.0;
  CHECK(mpjpe(pred, gt) == doctest::Approx(5.0 / 16.0).epsilon(1e-12));

  Mat shifted = pred;
  shifted.array() += 123.0;  // root alignment removes global translation
  CHECK(mpjpe(shifted, gt) == doctest::Approx(5.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("pa_mpjpe never exceeds mpjpe") {
  Rng rng(51);
  for (int t = 0; t < 40; ++t) {
    Mat gt = random_mat(16, 3, rng, 100.0);
    Mat pred = gt + random_mat(16, 3, rng, 10.0);
    CHECK(pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9);
  }
}

TEST_CASE("pa_mpjpe is invariant to similarity transforms") {
  Rng rng(53);
  Mat gt = random_mat(16, 3, rng, 100.0);
  Eigen::Matrix3d rot =
      (Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(-0.3, Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  Mat pred(16, 3);
  for (int i = 0; i < 16; ++i)
    pred.row(i) = (2.5 * (rot * gt.row(i).transpose()) + Eigen::Vector3d(40, -7, 13)).transpose();
  CHECK(pa_mpjpe(pred, gt) < 1e-9);
}

TEST_CASE("pa_mpjpe matches an independent procrustes oracle") {
  Rng rng(57);
  for (int t = 0; t < 20; ++t) {
    Mat gt = random_mat(16, 3, rng, 50.0);
    Mat pred = gt + random_mat(16, 3, rng, 8.0);
    CHECK(pa_mpjpe(pred, gt) == doctest::Approx(procrustes_oracle(pred, gt)).epsilon(1e-9));
  }
}

TEST_CASE("pa_mpjpe rejects a degenerate ground truth") {
  Mat gt = Mat::Ones(16, 3);
  Mat pred = Mat::Zero(16, 3);
  pred(3, 0) = 1.0;
  CHECK_THROWS_AS(pa_mpjpe(pred, gt), DomainError);
}

TEST_CASE("lifter shapes in both modes") {
  RunConfig cfg = parse_config("");
  cfg.lift_dim = 24;
  cfg.lift_heads = 4;
  cfg.lift_blocks = 2;
  SkeletonHierarchy h = build_hierarchy({16, 48, 96, {}});
  LifterModel hier(cfg, h, true, 3);
  CHECK(hier.input_tokens() == 160);
  Rng rng(61);
  Mat x = random_mat(160, 2, rng);
  Mat y = hier.predict(x);
  CHECK(y.rows() == 16);
  CHECK(y.cols() == 3);

  LifterModel sparse(cfg, h, false, 3);
  CHECK(sparse.input_tokens() == 16);
  Mat ys = sparse.predict(random_mat(16, 2, rng));
  CHECK(ys.rows() == 16);

  CHECK_THROWS_AS(hier.predict(Mat::Zero(16, 2)), DomainError);
}

TEST_CASE("lifter forward matches predict and is deterministic") {
  RunConfig cfg = tiny_cfg();
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  LifterModel m(cfg, h, true, 9);
  Rng rng(63);
  Mat x = random_mat(m.input_tokens(), 2, rng);
  nn::Graph g;
  Mat fwd = m.forward(g, x, false).val();
  Mat p1 = m.predict(x);
  CHECK((fwd - p1).norm() < 1e-12);
  LifterModel m2(cfg, h, true, 9);
  CHECK((m2.predict(x) - p1).norm() == 0.0);
}

TEST_CASE("lifter training reduces the loss and is deterministic") {
  RunConfig cfg = tiny_cfg();
  cfg.lift_epochs = 4;
  SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  Rng rng(67);
  std::vector<Mat> inputs, targets;
  Mat w = random_mat(3, 2, rng);  // a fixed linear map the model can learn
  for (int i = 0; i < 32; ++i) {
    Mat x = random_mat(h.j_sparse, 2, rng);
    inputs.push_back(x);
    Mat y(h.j_sparse, 3);
    for (int j = 0; j < h.j_sparse; ++j) y.row(j) = (w * x.row(j).transpose()).transpose();
    targets.push_back(y);
  }

  auto run = [&](LifterModel& m) {
    nn::AdamW opt;
    return train_lifter(m, opt, inputs, targets, cfg, 0, cfg.lift_epochs);
  };

  LifterModel m1(cfg, h, false, 9);
  LiftResult r1 = run(m1);
  CHECK_FALSE(r1.aborted);
  REQUIRE(r1.epochs.size() == 4);
  CHECK(r1.epochs.back().train_mse < r1.epochs.front().train_mse);

  LifterModel m2(cfg, h, false, 9);
  LiftResult r2 = run(m2);
  for (int i = 0; i < m1.ps.size(); ++i)
    CHECK((m1.ps.value(i) - m2.ps.value(i)).norm() == 0.0);
  CHECK(r1.epochs.back().train_mse == r2.epochs.back().train_mse);
}
