#include "hipart/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hipart/binio.hpp"

namespace hipart {

NormInfo norm_info_from_sparse(const Mat& x_s) {
  NormInfo n;
  n.root = x_s.row(0);
  Eigen::RowVector2d lo = x_s.colwise().minCoeff();
  Eigen::RowVector2d hi = x_s.colwise().maxCoeff();
  n.scale = std::max((hi - lo).norm(), 1e-6);
  return n;
}

Mat normalize_level(const Mat& x, const NormInfo& n) {
  return (x.rowwise() - n.root) / n.scale;
}

namespace {

// Detector-style corruption of the sparse level: Gaussian jitter plus an
// occasional masked region, both seeded per index.
Mat corrupt_sparse(const Mat& clean, const RunConfig& cfg, size_t i) {
  Mat xs = clean;
  if (cfg.noise_px > 0) {
    Rng rng = Rng::derive(static_cast<uint64_t>(cfg.data_seed), 0xA015E, i);
    for (int j = 0; j < xs.rows(); ++j)
      for (int c = 0; c < 2; ++c) xs(j, c) += cfg.noise_px * rng.normal();
  }
  if (cfg.occlude_prob > 0) {
    Rng rng = Rng::derive(static_cast<uint64_t>(cfg.data_seed), 0xA0CC, i);
    if (rng.uniform(0.0, 1.0) < cfg.occlude_prob) {
      double ratio = rng.uniform(0.0, cfg.occlude_max_ratio);
      xs = occlude(xs, OccludeMode::kMask, ratio, rng).pose;
    }
  }
  return xs;
}

}  // namespace

std::vector<NormSample> assemble_samples(const std::vector<HierPoseSample>& raw,
                                         const RunConfig& cfg) {
  std::vector<NormSample> out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const HierPoseSample& r = raw[i];
    Mat xs = corrupt_sparse(r.x_s, cfg, i);
    NormInfo ni = norm_info_from_sparse(xs);
    NormSample s;
    s.x_s = normalize_level(xs, ni);
    s.x_d = normalize_level(r.x_d, ni);
    s.x_f = normalize_level(r.x_f, ni);
    s.action = r.action;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<NormSample> assemble_gt_frame(const std::vector<HierPoseSample>& raw,
                                          const RunConfig& cfg) {
  std::vector<NormSample> out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const HierPoseSample& r = raw[i];
    Mat xs = corrupt_sparse(r.x_s, cfg, i);
    NormInfo ni = norm_info_from_sparse(r.x_s);
    NormSample s;
    s.x_s = normalize_level(xs, ni);
    s.x_d = normalize_level(r.x_d, ni);
    s.x_f = normalize_level(r.x_f, ni);
    s.action = r.action;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Mat> targets_meters(const std::vector<HierPoseSample>& raw) {
  std::vector<Mat> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(r.y3d / 1000.0);
  return out;
}

PipelineData prepare_data(const RunConfig& cfg, const std::vector<HierPoseSample>& raw) {
  PipelineData d;
  d.h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
  d.raw = raw;
  d.norm = assemble_samples(d.raw, cfg);
  d.norm_gt = assemble_gt_frame(d.raw, cfg);
  d.y_m = targets_meters(d.raw);
  int n = static_cast<int>(raw.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(static_cast<uint64_t>(cfg.data_seed), 0x5B117);
  rng.shuffle(order);
  int n_train = std::max(1, static_cast<int>(std::floor(n * cfg.train_fraction)));
  n_train = std::min(n_train, n);
  d.train_idx.assign(order.begin(), order.begin() + n_train);
  d.eval_idx.assign(order.begin() + n_train, order.end());
  if (d.eval_idx.empty()) d.eval_idx = d.train_idx;  // tiny datasets evaluate in-sample
  return d;
}

PipelineData generate_data(const RunConfig& cfg) {
  DatasetGenConfig gen;
  gen.hierarchy = {cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}};
  gen.num_actions = cfg.num_actions;
  SkeletonHierarchy h = build_hierarchy(gen.hierarchy);
  FkSpec spec = make_fk_spec(h, cfg.num_actions);
  std::vector<HierPoseSample> raw;
  raw.reserve(cfg.data_n);
  for (int i = 0; i < cfg.data_n; ++i)
    raw.push_back(make_sample(spec, gen, static_cast<uint64_t>(cfg.data_seed),
                              static_cast<uint64_t>(i)));
  return prepare_data(cfg, raw);
}

// ---------------------------------------------------------------------------

namespace {

Mat scalar_mat(double v) { return Mat::Constant(1, 1, v); }

void pack_meta(Checkpoint& cp, nn::AdamW* opt, const nn::ParamStore& ps, int next_epoch) {
  cp.add("meta.next_epoch", scalar_mat(next_epoch));
  if (opt) pack_optimizer(cp, *opt, ps);
}

int unpack_meta(const Checkpoint& cp, nn::AdamW* opt, const nn::ParamStore& ps) {
  if (opt && has_optimizer(cp)) unpack_optimizer(cp, *opt, ps);
  return static_cast<int>(cp.get("meta.next_epoch")(0, 0));
}

void pack_codebook(Checkpoint& cp, const std::string& prefix, const Codebook& c) {
  cp.add(prefix + ".entries", c.entries);
  cp.add(prefix + ".counts", c.ema_counts);
  cp.add(prefix + ".sums", c.ema_sums);
}

void unpack_codebook(const Checkpoint& cp, const std::string& prefix, Codebook& c) {
  c.entries = cp.get(prefix + ".entries");
  c.ema_counts = cp.get(prefix + ".counts");
  c.ema_sums = cp.get(prefix + ".sums");
  c.initialized = true;
}

uint64_t manifest_hash(const std::string& dataset_path) {
  std::ifstream mf(dataset_path + ".manifest");
  if (!mf) throw IoError("missing dataset manifest: " + dataset_path + ".manifest");
  std::string line;
  while (std::getline(mf, line)) {
    auto pos = line.find("config_hash = ");
    if (pos == 0) return std::stoull(line.substr(14), nullptr, 16);
  }
  throw IoError("manifest has no config_hash: " + dataset_path + ".manifest");
}

void check_dataset_hash(const RunConfig& cfg, const std::string& dataset_path) {
  uint64_t have = manifest_hash(dataset_path);
  if (have != cfg.hash()) throw IoError("dataset " + dataset_path + " was produced by a different config");
}

}  // namespace

Checkpoint msst_to_checkpoint(const MsstModel& m, nn::AdamW* opt, uint64_t hash,
                              int next_epoch) {
  Checkpoint cp;
  cp.tag = "msst";
  cp.config_hash = hash;
  pack_params(cp, m.ps);
  pack_codebook(cp, "cb_s", m.cb_s);
  pack_codebook(cp, "cb_d", m.cb_d);
  pack_meta(cp, opt, m.ps, next_epoch);
  return cp;
}

int msst_from_checkpoint(const Checkpoint& cp, MsstModel& m, nn::AdamW* opt) {
  unpack_params(cp, m.ps);
  unpack_codebook(cp, "cb_s", m.cb_s);
  unpack_codebook(cp, "cb_d", m.cb_d);
  return unpack_meta(cp, opt, m.ps);
}

Checkpoint hiarm_to_checkpoint(const HiarmModel& m, nn::AdamW* opt, uint64_t hash,
                               int next_epoch) {
  Checkpoint cp;
  cp.tag = "hiarm";
  cp.config_hash = hash;
  pack_params(cp, m.ps);
  pack_meta(cp, opt, m.ps, next_epoch);
  return cp;
}

int hiarm_from_checkpoint(const Checkpoint& cp, HiarmModel& m, nn::AdamW* opt) {
  unpack_params(cp, m.ps);
  return unpack_meta(cp, opt, m.ps);
}

Checkpoint lifter_to_checkpoint(const LifterModel& m, nn::AdamW* opt, uint64_t hash,
                                int next_epoch) {
  Checkpoint cp;
  cp.tag = "lifter";
  cp.config_hash = hash;
  cp.add("meta.hierarchical", scalar_mat(m.hierarchical() ? 1 : 0));
  pack_params(cp, m.ps);
  pack_meta(cp, opt, m.ps, next_epoch);
  return cp;
}

int lifter_from_checkpoint(const Checkpoint& cp, LifterModel& m, nn::AdamW* opt) {
  if ((cp.get("meta.hierarchical")(0, 0) != 0) != m.hierarchical())
    throw IoError("lifter checkpoint level-mode mismatch");
  unpack_params(cp, m.ps);
  return unpack_meta(cp, opt, m.ps);
}

// ---------------------------------------------------------------------------

Mat lifter_input_gt(const NormSample& s) {
  Mat x(s.x_s.rows() + s.x_d.rows() + s.x_f.rows(), 2);
  x << s.x_s, s.x_d, s.x_f;
  return x;
}

Mat lifter_input_sparse(const NormSample& s) { return s.x_s; }

Mat lifter_input_hier(const Mat& x_s, const Mat& xhat_d, const Mat& xhat_f) {
  Mat x(x_s.rows() + xhat_d.rows() + xhat_f.rows(), 2);
  x << x_s, xhat_d, xhat_f;
  return x;
}

std::pair<Mat, Mat> densify_pose(const HiarmModel& hiarm, const MsstModel& msst,
                                 const Mat& x_s_norm) {
  TokenGrid grid = hiarm.generate(x_s_norm, msst.cb_s, msst.cb_d);
  MsstModel::Tokens t = tokens_from_grid(hiarm.hierarchy(), grid);
  return msst.decode_tokens(t.q_s, t.q_d);
}

double eval_lifter_mpjpe_mm(const LifterModel& m, const std::vector<Mat>& inputs,
                            const std::vector<Mat>& y_m) {
  if (inputs.size() != y_m.size() || inputs.empty())
    throw DomainError("eval_lifter_mpjpe_mm: input/target mismatch");
  double sum = 0;
  for (size_t i = 0; i < inputs.size(); ++i)
    sum += mpjpe(m.predict(inputs[i]) * 1000.0, y_m[i] * 1000.0);
  return sum / static_cast<double>(inputs.size());
}

std::vector<Mat> build_lifter_inputs(const PipelineData& data, const std::vector<int>& idx,
                                     LiftMode mode, const HiarmModel* hiarm,
                                     const MsstModel* msst) {
  std::vector<Mat> out;
  out.reserve(idx.size());
  for (int i : idx) {
    const NormSample& s = data.norm[i];
    switch (mode) {
      case LiftMode::kSparseOnly:
        out.push_back(lifter_input_sparse(s));
        break;
      case LiftMode::kGtHier:
        out.push_back(lifter_input_gt(data.norm_gt[i]));
        break;
      case LiftMode::kGenHier: {
        if (!hiarm || !msst) throw DomainError("generated-hierarchy inputs need both models");
        auto [xd, xf] = densify_pose(*hiarm, *msst, s.x_s);
        out.push_back(lifter_input_hier(s.x_s, xd, xf));
        break;
      }
    }
  }
  return out;
}

OcclusionCurve occlusion_curve(const LifterModel& lifter, const HiarmModel* hiarm,
                               const MsstModel* msst, const PipelineData& data,
                               const std::vector<int>& idx, OccludeMode mode,
                               const std::vector<double>& ratios, uint64_t seed) {
  OcclusionCurve curve;
  for (size_t ri = 0; ri < ratios.size(); ++ri) {
    double ratio = ratios[ri];
    double sum = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
      int i = idx[k];
      Rng rng = Rng::derive(seed, 0x0CC1, ri, k);
      Mat xs = occlude(data.norm[i].x_s, mode, ratio, rng).pose;
      Mat input;
      if (lifter.hierarchical()) {
        if (!hiarm || !msst) throw DomainError("hierarchical occlusion eval needs both models");
        auto [xd, xf] = densify_pose(*hiarm, *msst, xs);
        input = lifter_input_hier(xs, xd, xf);
      } else {
        input = xs;
      }
      sum += mpjpe(lifter.predict(input) * 1000.0, data.y_m[i] * 1000.0);
    }
    curve.ratios.push_back(ratio);
    curve.mpjpe_mm.push_back(sum / static_cast<double>(idx.size()));
  }
  return curve;
}

// ---------------------------------------------------------------------------

namespace {

void write_metric_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& l : lines) os << l << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void run_gen_data(const RunConfig& cfg, const StagePaths& paths) {
  DatasetGenConfig gen;
  gen.hierarchy = {cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}};
  gen.num_actions = cfg.num_actions;
  make_dataset(paths.dataset(), cfg.data_n, gen, static_cast<uint64_t>(cfg.data_seed),
               cfg.hash());
}

void run_train_msst(const RunConfig& cfg, const StagePaths& paths) {
  check_dataset_hash(cfg, paths.dataset());
  PipelineData data = prepare_data(cfg, read_dataset(paths.dataset()).second);
  std::vector<NormSample> train;
  for (int i : data.train_idx) train.push_back(data.norm[i]);

  MsstModel m(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  nn::AdamW opt;
  Stage1Result res = train_stage1(m, opt, train, cfg, 0, cfg.msst_epochs);

  save_checkpoint(msst_to_checkpoint(m, &opt, cfg.hash(),
                                     static_cast<int>(res.epochs.size())),
                  paths.msst_ckpt());
  std::vector<std::string> lines;
  if (res.aborted) lines.push_back("aborted = 1");
  for (const auto& e : res.epochs)
    lines.push_back("epoch " + std::to_string(e.epoch) + " mse_f " + fmt(e.mse_f) + " mse_d " +
                    fmt(e.mse_d) + " total " + fmt(e.total) + " perp_s " + fmt(e.perplexity_s) +
                    " perp_d " + fmt(e.perplexity_d));
  write_metric_lines(paths.msst_ckpt() + ".metrics", lines);
  if (res.aborted) throw NumericError("stage-1 training aborted on non-finite loss; last-good checkpoint written");
}

void run_train_hiarm(const RunConfig& cfg, const StagePaths& paths) {
  check_dataset_hash(cfg, paths.dataset());
  PipelineData data = prepare_data(cfg, read_dataset(paths.dataset()).second);
  MsstModel msst(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  msst_from_checkpoint(load_checkpoint(paths.msst_ckpt(), "msst", cfg.hash()), msst, nullptr);

  std::vector<NormSample> train;
  std::vector<TokenGrid> grids;
  for (int i : data.train_idx) {
    train.push_back(data.norm[i]);
    grids.push_back(grid_from_tokens(data.h, msst.encode_tokens(data.norm[i].x_f)));
  }

  HiarmModel m(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  nn::AdamW opt;
  Stage2Result res = train_stage2(m, opt, train, grids, msst, cfg, 0, cfg.hiarm_epochs);

  save_checkpoint(hiarm_to_checkpoint(m, &opt, cfg.hash(),
                                      static_cast<int>(res.epochs.size())),
                  paths.hiarm_ckpt());
  std::vector<std::string> lines;
  if (res.aborted) lines.push_back("aborted = 1");
  for (const auto& e : res.epochs)
    lines.push_back("epoch " + std::to_string(e.epoch) + " ce_sparse " + fmt(e.ce_sparse) +
                    " ce_dense " + fmt(e.ce_dense) + " total " + fmt(e.total));
  write_metric_lines(paths.hiarm_ckpt() + ".metrics", lines);
  if (res.aborted) throw NumericError("stage-2 training aborted on non-finite loss; last-good checkpoint written");
}

namespace {

LiftMode parse_mode(const std::string& mode) {
  if (mode == "sparse") return LiftMode::kSparseOnly;
  if (mode == "gt") return LiftMode::kGtHier;
  if (mode == "gen") return LiftMode::kGenHier;
  throw ConfigError("unknown lifter mode '" + mode + "' (expected sparse | gt | gen)");
}

}  // namespace

void run_train_lifter(const RunConfig& cfg, const StagePaths& paths, const std::string& mode) {
  check_dataset_hash(cfg, paths.dataset());
  LiftMode lm = parse_mode(mode);
  PipelineData data = prepare_data(cfg, read_dataset(paths.dataset()).second);

  MsstModel* msst_ptr = nullptr;
  HiarmModel* hiarm_ptr = nullptr;
  MsstModel msst(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  HiarmModel hiarm(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  if (lm == LiftMode::kGenHier) {
    msst_from_checkpoint(load_checkpoint(paths.msst_ckpt(), "msst", cfg.hash()), msst, nullptr);
    hiarm_from_checkpoint(load_checkpoint(paths.hiarm_ckpt(), "hiarm", cfg.hash()), hiarm,
                          nullptr);
    msst_ptr = &msst;
    hiarm_ptr = &hiarm;
  }

  std::vector<Mat> train_in = build_lifter_inputs(data, data.train_idx, lm, hiarm_ptr, msst_ptr);
  std::vector<Mat> train_y;
  for (int i : data.train_idx) train_y.push_back(data.y_m[i]);

  LifterModel m(cfg, data.h, lm != LiftMode::kSparseOnly, static_cast<uint64_t>(cfg.train_seed));
  nn::AdamW opt;
  LiftResult res = train_lifter(m, opt, train_in, train_y, cfg, 0, cfg.lift_epochs);

  std::vector<Mat> eval_in = build_lifter_inputs(data, data.eval_idx, lm, hiarm_ptr, msst_ptr);
  std::vector<Mat> eval_y;
  for (int i : data.eval_idx) eval_y.push_back(data.y_m[i]);
  double eval_mm = eval_lifter_mpjpe_mm(m, eval_in, eval_y);

  save_checkpoint(lifter_to_checkpoint(m, &opt, cfg.hash(),
                                       static_cast<int>(res.epochs.size())),
                  paths.lifter_ckpt(mode));
  std::vector<std::string> lines;
  if (res.aborted) lines.push_back("aborted = 1");
  for (const auto& e : res.epochs)
    lines.push_back("epoch " + std::to_string(e.epoch) + " train_mse " + fmt(e.train_mse));
  lines.push_back("eval_mpjpe_mm " + fmt(eval_mm));
  write_metric_lines(paths.lifter_ckpt(mode) + ".metrics", lines);
  if (res.aborted) throw NumericError("lifter training aborted on non-finite loss; last-good checkpoint written");
}

void run_densify(const RunConfig& cfg, const StagePaths& paths) {
  check_dataset_hash(cfg, paths.dataset());
  PipelineData data = prepare_data(cfg, read_dataset(paths.dataset()).second);
  MsstModel msst(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  msst_from_checkpoint(load_checkpoint(paths.msst_ckpt(), "msst", cfg.hash()), msst, nullptr);
  HiarmModel hiarm(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  hiarm_from_checkpoint(load_checkpoint(paths.hiarm_ckpt(), "hiarm", cfg.hash()), hiarm,
                        nullptr);

  std::ofstream os(paths.densified(), std::ios::binary);
  if (!os) throw IoError("cannot write " + paths.densified());
  os.write("HPDN", 4);
  binio::put_u32(os, 1);
  binio::put_u32(os, static_cast<uint32_t>(data.norm.size()));
  binio::put_u32(os, static_cast<uint32_t>(data.h.j_sparse));
  binio::put_u32(os, static_cast<uint32_t>(data.h.j_dense));
  binio::put_u32(os, static_cast<uint32_t>(data.h.j_fine));
  binio::put_u64(os, cfg.hash());
  for (const auto& s : data.norm) {
    TokenGrid grid = hiarm.generate(s.x_s, msst.cb_s, msst.cb_d);
    MsstModel::Tokens t = tokens_from_grid(data.h, grid);
    auto [xd, xf] = msst.decode_tokens(t.q_s, t.q_d);
    for (int q : t.q_s) binio::put_u32(os, static_cast<uint32_t>(q));
    for (int q : t.q_d) binio::put_u32(os, static_cast<uint32_t>(q));
    binio::put_mat_f32(os, xd);
    binio::put_mat_f32(os, xf);
  }
  if (!os) throw IoError("write failed: " + paths.densified());
  write_metric_lines(paths.densified() + ".metrics",
                     {"records " + std::to_string(data.norm.size())});
}

void run_evaluate(const RunConfig& cfg, const StagePaths& paths, bool occlusion) {
  check_dataset_hash(cfg, paths.dataset());
  PipelineData data = prepare_data(cfg, read_dataset(paths.dataset()).second);
  MsstModel msst(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  HiarmModel hiarm(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
  bool have_gen_stack = false;
  try {
    msst_from_checkpoint(load_checkpoint(paths.msst_ckpt(), "msst", cfg.hash()), msst, nullptr);
    hiarm_from_checkpoint(load_checkpoint(paths.hiarm_ckpt(), "hiarm", cfg.hash()), hiarm,
                          nullptr);
    have_gen_stack = true;
  } catch (const IoError&) {
  }

  std::vector<Mat> eval_y;
  for (int i : data.eval_idx) eval_y.push_back(data.y_m[i]);

  std::vector<std::string> lines;
  for (const std::string& mode : {std::string("sparse"), std::string("gt"), std::string("gen")}) {
    std::ifstream probe(paths.lifter_ckpt(mode));
    if (!probe) continue;
    LiftMode lm = parse_mode(mode);
    if (lm == LiftMode::kGenHier && !have_gen_stack)
      throw IoError("generated-hierarchy evaluation needs msst and hiarm checkpoints");
    LifterModel m(cfg, data.h, lm != LiftMode::kSparseOnly,
                  static_cast<uint64_t>(cfg.train_seed));
    lifter_from_checkpoint(load_checkpoint(paths.lifter_ckpt(mode), "lifter", cfg.hash()), m,
                           nullptr);
    std::vector<Mat> in = build_lifter_inputs(data, data.eval_idx, lm,
                                              have_gen_stack ? &hiarm : nullptr,
                                              have_gen_stack ? &msst : nullptr);
    lines.push_back("mpjpe_mm_" + mode + " " + fmt(eval_lifter_mpjpe_mm(m, in, eval_y)));

    if (occlusion && (lm == LiftMode::kGenHier || lm == LiftMode::kSparseOnly)) {
      auto curves = [&](OccludeMode om, const std::vector<double>& ratios,
                        const std::string& name) {
        OcclusionCurve c = occlusion_curve(m, have_gen_stack ? &hiarm : nullptr,
                                           have_gen_stack ? &msst : nullptr, data, data.eval_idx,
                                           om, ratios, static_cast<uint64_t>(cfg.train_seed));
        std::ofstream os(paths.out_dir + "/occlusion_" + name + "_" + mode + ".csv");
        if (!os) throw IoError("cannot write occlusion csv");
        os << "ratio,mpjpe_mm\n";
        for (size_t i = 0; i < c.ratios.size(); ++i)
          os << fmt(c.ratios[i]) << "," << fmt(c.mpjpe_mm[i]) << "\n";
      };
      curves(OccludeMode::kMask, {0.0, 0.2, 0.4, 0.6, 0.8}, "mask");
      curves(OccludeMode::kCrop, {0.0, 0.1, 0.2, 0.3, 0.4}, "crop");
    }
  }
  if (lines.empty()) throw IoError("evaluate: no lifter checkpoints found in " + paths.out_dir);
  write_metric_lines(paths.out_dir + "/evaluate.txt", lines);
}

}  // namespace hipart
