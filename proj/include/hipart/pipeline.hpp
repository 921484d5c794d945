#pragma once

#include <string>

#include "hipart/checkpoint.hpp"
#include "hipart/hiarm.hpp"
#include "hipart/lift.hpp"
#include "hipart/msst.hpp"
#include "hipart/posegen.hpp"

namespace hipart {

// 2D normalization frame: root-relative, scaled by the sparse bounding-box
// diagonal (floored). 3D targets train in meters, metrics report mm.
struct NormInfo {
  Eigen::RowVector2d root;
  double scale = 1.0;
};

NormInfo norm_info_from_sparse(const Mat& x_s);
Mat normalize_level(const Mat& x, const NormInfo& n);

// Raw records -> normalized samples. Detector noise (cfg.noise_px Gaussian)
// is applied to the sparse level before normalization, seeded per index.
std::vector<NormSample> assemble_samples(const std::vector<HierPoseSample>& raw,
                                         const RunConfig& cfg);
// Same levels framed by the clean sparse pose; the reference-hierarchy lifter
// derives its frame from the hierarchy instead of the detector output.
std::vector<NormSample> assemble_gt_frame(const std::vector<HierPoseSample>& raw,
                                          const RunConfig& cfg);
std::vector<Mat> targets_meters(const std::vector<HierPoseSample>& raw);

struct PipelineData {
  SkeletonHierarchy h;
  std::vector<HierPoseSample> raw;
  std::vector<NormSample> norm;
  std::vector<NormSample> norm_gt;
  std::vector<Mat> y_m;  // j_sparse x 3, meters, root-relative
  std::vector<int> train_idx, eval_idx;
};

PipelineData prepare_data(const RunConfig& cfg, const std::vector<HierPoseSample>& raw);
PipelineData generate_data(const RunConfig& cfg);  // in-memory gen-data

// Checkpoint glue; `opt` optional on both sides.
Checkpoint msst_to_checkpoint(const MsstModel& m, nn::AdamW* opt, uint64_t hash, int next_epoch);
int msst_from_checkpoint(const Checkpoint& cp, MsstModel& m, nn::AdamW* opt);  // -> next_epoch
Checkpoint hiarm_to_checkpoint(const HiarmModel& m, nn::AdamW* opt, uint64_t hash,
                               int next_epoch);
int hiarm_from_checkpoint(const Checkpoint& cp, HiarmModel& m, nn::AdamW* opt);
Checkpoint lifter_to_checkpoint(const LifterModel& m, nn::AdamW* opt, uint64_t hash,
                                int next_epoch);
int lifter_from_checkpoint(const Checkpoint& cp, LifterModel& m, nn::AdamW* opt);

// Lifter input assembly (normalized coordinates throughout).
Mat lifter_input_gt(const NormSample& s);
Mat lifter_input_sparse(const NormSample& s);
Mat lifter_input_hier(const Mat& x_s, const Mat& xhat_d, const Mat& xhat_f);

// Token generation + decode for one conditioning pose -> (x̂_d, x̂_f).
std::pair<Mat, Mat> densify_pose(const HiarmModel& hiarm, const MsstModel& msst,
                                 const Mat& x_s_norm);

double eval_lifter_mpjpe_mm(const LifterModel& m, const std::vector<Mat>& inputs,
                            const std::vector<Mat>& y_m);

enum class LiftMode { kSparseOnly, kGtHier, kGenHier };

// Inputs for every index in `idx`; kGenHier runs the densifier per pose.
std::vector<Mat> build_lifter_inputs(const PipelineData& data, const std::vector<int>& idx,
                                     LiftMode mode, const HiarmModel* hiarm,
                                     const MsstModel* msst);

struct OcclusionCurve {
  std::vector<double> ratios;
  std::vector<double> mpjpe_mm;
};

// Corrupt x_s at each ratio, re-densify (hierarchical mode), lift, score.
OcclusionCurve occlusion_curve(const LifterModel& lifter, const HiarmModel* hiarm,
                               const MsstModel* msst, const PipelineData& data,
                               const std::vector<int>& idx, OccludeMode mode,
                               const std::vector<double>& ratios, uint64_t seed);

// ---- file-level stage runners used by the CLI ----------------------------

struct StagePaths {
  std::string out_dir;
  std::string dataset() const { return out_dir + "/dataset.bin"; }
  std::string msst_ckpt() const { return out_dir + "/msst.ckpt"; }
  std::string hiarm_ckpt() const { return out_dir + "/hiarm.ckpt"; }
  std::string lifter_ckpt(const std::string& mode) const {
    return out_dir + "/lifter_" + mode + ".ckpt";
  }
  std::string densified() const { return out_dir + "/densified.bin"; }
};

void run_gen_data(const RunConfig& cfg, const StagePaths& paths);
void run_train_msst(const RunConfig& cfg, const StagePaths& paths);
void run_train_hiarm(const RunConfig& cfg, const StagePaths& paths);
void run_train_lifter(const RunConfig& cfg, const StagePaths& paths, const std::string& mode);
void run_densify(const RunConfig& cfg, const StagePaths& paths);
void run_evaluate(const RunConfig& cfg, const StagePaths& paths, bool occlusion);

}  // namespace hipart
