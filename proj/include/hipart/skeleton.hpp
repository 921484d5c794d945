#pragma once

#include <vector>

#include "hipart/common.hpp"

namespace hipart {

// Three-level joint topology. part_map_sd[i] lists the dense joints owned by
// sparse joint i (always r of them); part_map_df[j] lists the fine joints of
// dense joint j (always 2). gen_order is the center-to-periphery decode order.
struct SkeletonHierarchy {
  int j_sparse = 16;
  int j_dense = 48;
  int j_fine = 96;
  int r = 3;
  std::vector<int> parents_sparse;            // parent index, -1 for the root
  std::vector<std::vector<int>> part_map_sd;  // sparse -> dense joints
  std::vector<std::vector<int>> part_map_df;  // dense -> fine joints
  std::vector<int> gen_order;

  bool operator==(const SkeletonHierarchy&) const = default;
};

struct HierarchyConfig {
  int j_sparse = 16;
  int j_dense = 48;
  int j_fine = 96;
  // Empty means: the canonical 16-joint human tree when j_sparse == 16,
  // otherwise a chain rooted at joint 0.
  std::vector<int> parents_sparse;
};

SkeletonHierarchy build_hierarchy(const HierarchyConfig& config);

// BFS from the root over parents_sparse, siblings in ascending index order.
std::vector<int> generation_order(const SkeletonHierarchy& h);

int part_of(const SkeletonHierarchy& h, int dense_joint);

// Throws DomainError if any type invariant fails.
void validate_hierarchy(const SkeletonHierarchy& h);

// Parent table of the canonical 16-joint skeleton (pelvis root).
const std::vector<int>& canonical_parents16();

}  // namespace hipart
