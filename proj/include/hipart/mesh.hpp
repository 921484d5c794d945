#pragma once

#include <vector>

#include "hipart/common.hpp"

namespace hipart {

struct MeshGraph {
  Mat vertices;  // N x 3, mm
  std::vector<std::pair<int, int>> edges;
  std::vector<double> edge_weights;

  int size() const { return static_cast<int>(vertices.rows()); }
};

void validate_mesh(const MeshGraph& g);  // undirected, no self loops, connected

struct CoarsenResult {
  MeshGraph graph;
  std::vector<int> assignment;  // fine node -> coarse node, total and surjective
  bool reached_target = true;
};

// Heavy Edge Matching rounds: nodes are visited in ascending index order and
// matched to their heaviest-edge unmatched neighbor (weight ties broken by
// lowest neighbor index). Matched pairs merge into one supernode whose
// position is the member mean and whose parallel edge weights are summed.
// Merging stops mid-round once target_n is reached. `seed` drives the
// optional randomized visit order; the default order is deterministic.
CoarsenResult hem_coarsen(const MeshGraph& g, int target_n, uint64_t seed = 0,
                          bool randomize_order = false);

}  // namespace hipart
