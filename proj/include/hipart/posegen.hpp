#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hipart/camera.hpp"
#include "hipart/mesh.hpp"
#include "hipart/skeleton.hpp"

namespace hipart {

// Articulated skeleton used in place of mesh-derived poses: a sparse joint
// tree with rest offsets (mm) and per-joint Euler angle ranges, plus rigid
// dense/fine attachment points per part. Action templates are fixed angle
// configurations that samples are drawn around.
struct FkSpec {
  SkeletonHierarchy hierarchy;
  std::vector<Eigen::Vector3d> rest_offsets;   // per sparse joint, from parent
  std::vector<Eigen::Vector3d> angle_ranges;   // per sparse joint, rad, symmetric
  std::vector<Eigen::Vector3d> dense_local;    // j_dense, in the part frame
  std::vector<Eigen::Vector3d> fine_local;     // j_fine, in the part frame
  int num_actions = 8;
};

FkSpec make_fk_spec(const SkeletonHierarchy& h, int num_actions = 8);

// Joint angles of action template `a` (deterministic, within ranges).
std::vector<Eigen::Vector3d> action_template(const FkSpec& spec, int a);

// Fine-level 3D pose (j_fine x 3, mm, root at origin) for the given angles.
Mat fk_fine_pose(const FkSpec& spec, const std::vector<Eigen::Vector3d>& angles);

// Sparse joint positions for the same angles (j_sparse x 3).
Mat fk_sparse_joints(const FkSpec& spec, const std::vector<Eigen::Vector3d>& angles);

// Random pose near a template; returns the fine pose and the action label.
Mat sample_pose3d(const FkSpec& spec, Rng& rng, int* action_out = nullptr);

// Rest-pose fine skeleton as a mesh graph (chains within parts plus
// connectors to the parent part), edge weight 1 per bone.
MeshGraph fine_rest_graph(const FkSpec& spec);

enum class OccludeMode { kMask, kCrop };

struct OccludeResult {
  Mat pose;                      // J x 2
  std::vector<char> visibility;  // 1 = untouched
};

OccludeResult occlude(const Mat& x, OccludeMode mode, double ratio, Rng& rng);

// ---------------------------------------------------------------------------
// Dataset records and file format (magic "HPD1").

struct HierPoseSample {
  Mat x_f;   // j_fine x 2, px
  Mat x_d;   // j_dense x 2
  Mat x_s;   // j_sparse x 2
  Mat y3d;   // j_sparse x 3, mm, root-relative
  int action = 0;
  Camera camera;
};

struct DatasetHeader {
  uint32_t version = 1;
  uint32_t n = 0;
  uint32_t j_sparse = 16, j_dense = 48, j_fine = 96;
  uint32_t num_actions = 8;
};

struct DatasetGenConfig {
  HierarchyConfig hierarchy;
  int num_actions = 8;
  double camera_distance_mm = 4200.0;
  double focal_px = 1100.0;
  double principal_px = 500.0;
};

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<HierPoseSample>& samples, uint64_t config_hash,
                   uint64_t seed);
std::pair<DatasetHeader, std::vector<HierPoseSample>> read_dataset(const std::string& path);

// FK sample -> group-averaged dense/sparse levels -> projection.
HierPoseSample make_sample(const FkSpec& spec, const DatasetGenConfig& cfg, uint64_t seed,
                           uint64_t index);

void make_dataset(const std::string& path, int n, const DatasetGenConfig& cfg,
                  uint64_t seed, uint64_t config_hash);

void validate_sample(const HierPoseSample& s, const SkeletonHierarchy& h);

}  // namespace hipart
