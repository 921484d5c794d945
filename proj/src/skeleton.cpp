#include "hipart/skeleton.hpp"

#include <algorithm>
#include <queue>

namespace hipart {

const std::vector<int>& canonical_parents16() {
  // 0 pelvis, 1 spine, 2 neck, 3 head, 4-6 left leg, 7-9 right leg,
  // 10-12 left arm, 13-15 right arm. Version 1 of the built-in table.
  static const std::vector<int> p = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 2, 10, 11, 2, 13, 14};
  return p;
}

SkeletonHierarchy build_hierarchy(const HierarchyConfig& config) {
  if (config.j_sparse < 1) throw ConfigError("j_sparse must be >= 1");
  if (config.j_dense % config.j_sparse != 0)
    throw ConfigError("j_dense must be a multiple of j_sparse");
  if (config.j_fine != 2 * config.j_dense)
    throw ConfigError("j_fine must equal 2 * j_dense");

  SkeletonHierarchy h;
  h.j_sparse = config.j_sparse;
  h.j_dense = config.j_dense;
  h.j_fine = config.j_fine;
  h.r = config.j_dense / config.j_sparse;

  if (!config.parents_sparse.empty()) {
    h.parents_sparse = config.parents_sparse;
  } else if (config.j_sparse == 16) {
    h.parents_sparse = canonical_parents16();
  } else {
    h.parents_sparse.resize(config.j_sparse);
    for (int i = 0; i < config.j_sparse; ++i) h.parents_sparse[i] = i - 1;
  }
  if (static_cast<int>(h.parents_sparse.size()) != h.j_sparse)
    throw ConfigError("parents_sparse size does not match j_sparse");

  h.part_map_sd.resize(h.j_sparse);
  for (int i = 0; i < h.j_sparse; ++i)
    for (int k = 0; k < h.r; ++k) h.part_map_sd[i].push_back(i * h.r + k);
  h.part_map_df.resize(h.j_dense);
  for (int j = 0; j < h.j_dense; ++j) h.part_map_df[j] = {2 * j, 2 * j + 1};

  h.gen_order = generation_order(h);
  validate_hierarchy(h);
  return h;
}

std::vector<int> generation_order(const SkeletonHierarchy& h) {
  int root = -1;
  std::vector<std::vector<int>> children(h.j_sparse);
  for (int i = 0; i < h.j_sparse; ++i) {
    int p = h.parents_sparse[i];
    if (p < 0) {
      if (root >= 0) throw DomainError("multiple roots in parents_sparse");
      root = i;
    } else {
      if (p >= h.j_sparse) throw DomainError("parent index out of range");
      children[p].push_back(i);
    }
  }
  if (root < 0) throw DomainError("no root in parents_sparse");
  for (auto& c : children) std::sort(c.begin(), c.end());

  std::vector<int> order;
  std::queue<int> q;
  q.push(root);
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    order.push_back(i);
    for (int c : children[i]) q.push(c);
  }
  if (static_cast<int>(order.size()) != h.j_sparse)
    throw DomainError("parents_sparse is not a tree (unreachable joints)");
  return order;
}

int part_of(const SkeletonHierarchy& h, int dense_joint) {
  if (dense_joint < 0 || dense_joint >= h.j_dense)
    throw DomainError("dense joint index out of range");
  return dense_joint / h.r;
}

void validate_hierarchy(const SkeletonHierarchy& h) {
  if (h.j_dense != h.r * h.j_sparse) throw DomainError("j_dense != r * j_sparse");
  if (h.j_fine != 2 * h.j_dense) throw DomainError("j_fine != 2 * j_dense");

  std::vector<int> owner_d(h.j_dense, -1);
  for (int i = 0; i < h.j_sparse; ++i) {
    if (static_cast<int>(h.part_map_sd[i].size()) != h.r)
      throw DomainError("part_map_sd part size != r");
    for (int d : h.part_map_sd[i]) {
      if (d < 0 || d >= h.j_dense || owner_d[d] != -1)
        throw DomainError("part_map_sd is not a partition");
      owner_d[d] = i;
    }
  }
  std::vector<int> owner_f(h.j_fine, -1);
  for (int j = 0; j < h.j_dense; ++j) {
    for (int f : h.part_map_df[j]) {
      if (f < 0 || f >= h.j_fine || owner_f[f] != -1)
        throw DomainError("part_map_df is not a partition");
      owner_f[f] = j;
    }
  }

  std::vector<char> seen(h.j_sparse, 0);
  std::vector<int> pos(h.j_sparse, -1);
  if (static_cast<int>(h.gen_order.size()) != h.j_sparse)
    throw DomainError("gen_order size mismatch");
  for (int i = 0; i < h.j_sparse; ++i) {
    int j = h.gen_order[i];
    if (j < 0 || j >= h.j_sparse || seen[j]) throw DomainError("gen_order is not a bijection");
    seen[j] = 1;
    pos[j] = i;
  }
  if (h.parents_sparse[h.gen_order[0]] != -1) throw DomainError("gen_order[0] is not the root");
  for (int i = 1; i < h.j_sparse; ++i) {
    int p = h.parents_sparse[h.gen_order[i]];
    if (p < 0 || pos[p] >= i) throw DomainError("gen_order places a child before its parent");
  }
}

}  // namespace hipart
