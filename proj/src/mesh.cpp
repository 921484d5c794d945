#include "hipart/mesh.hpp"

#include <map>
#include <numeric>

namespace hipart {

void validate_mesh(const MeshGraph& g) {
  int n = g.size();
  if (g.edge_weights.size() != g.edges.size()) throw DomainError("edge weight count mismatch");
  std::vector<std::vector<int>> adj(n);
  for (size_t e = 0; e < g.edges.size(); ++e) {
    auto [u, v] = g.edges[e];
    if (u == v) throw DomainError("mesh graph has a self loop");
    if (u < 0 || v < 0 || u >= n || v >= n) throw DomainError("edge index out of range");
    if (g.edge_weights[e] < 0) throw DomainError("negative edge weight");
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  if (count != n) throw DomainError("mesh graph is not connected");
}

namespace {

struct WorkGraph {
  std::vector<Eigen::Vector3d> pos;
  std::vector<int> members;                 // member count per node
  std::vector<std::map<int, double>> adj;   // neighbor -> weight
};

// One matching round. Returns the merge partner per node (or -1) with merges
// capped so the node count never drops below target_n.
int match_round(const WorkGraph& wg, const std::vector<int>& visit, int target_n,
                std::vector<int>& partner) {
  int n = static_cast<int>(wg.pos.size());
  partner.assign(n, -1);
  int merges = 0;
  int budget = n - target_n;
  for (int u : visit) {
    if (merges >= budget) break;
    if (partner[u] != -1) continue;
    int best = -1;
    double best_w = -1.0;
    for (const auto& [v, w] : wg.adj[u]) {
      if (partner[v] != -1) continue;
      if (w > best_w || (w == best_w && (best == -1 || v < best))) {
        best = v;
        best_w = w;
      }
    }
    if (best != -1) {
      partner[u] = best;
      partner[best] = u;
      ++merges;
    }
  }
  return merges;
}

}  // namespace

CoarsenResult hem_coarsen(const MeshGraph& g, int target_n, uint64_t seed,
                          bool randomize_order) {
  validate_mesh(g);
  int n = g.size();
  if (target_n >= n && target_n != n) throw DomainError("target_n exceeds node count");
  if (target_n < 1 || target_n > n) throw DomainError("target_n out of range");

  WorkGraph wg;
  wg.pos.resize(n);
  wg.members.assign(n, 1);
  wg.adj.resize(n);
  for (int i = 0; i < n; ++i) wg.pos[i] = g.vertices.row(i).transpose();
  for (size_t e = 0; e < g.edges.size(); ++e) {
    auto [u, v] = g.edges[e];
    wg.adj[u][v] += g.edge_weights[e];
    wg.adj[v][u] += g.edge_weights[e];
  }

  std::vector<int> assignment(n);
  std::iota(assignment.begin(), assignment.end(), 0);
  Rng rng = Rng::derive(seed, 0x48454d);

  while (static_cast<int>(wg.pos.size()) > target_n) {
    int cur = static_cast<int>(wg.pos.size());
    std::vector<int> visit(cur);
    std::iota(visit.begin(), visit.end(), 0);
    if (randomize_order) rng.shuffle(visit);

    std::vector<int> partner;
    int merges = match_round(wg, visit, target_n, partner);
    if (merges == 0) break;  // structural limit

    // Relabel: merged pair keeps the lower index's slot.
    std::vector<int> relabel(cur, -1);
    int next = 0;
    for (int u = 0; u < cur; ++u) {
      if (partner[u] != -1 && partner[u] < u) {
        relabel[u] = relabel[partner[u]];
      } else {
        relabel[u] = next++;
      }
    }

    WorkGraph merged;
    merged.pos.assign(next, Eigen::Vector3d::Zero());
    merged.members.assign(next, 0);
    merged.adj.resize(next);
    for (int u = 0; u < cur; ++u) {
      int c = relabel[u];
      merged.pos[c] += wg.pos[u] * wg.members[u];
      merged.members[c] += wg.members[u];
    }
    for (int c = 0; c < next; ++c) merged.pos[c] /= merged.members[c];
    for (int u = 0; u < cur; ++u)
      for (const auto& [v, w] : wg.adj[u]) {
        if (u >= v) continue;
        int cu = relabel[u], cv = relabel[v];
        if (cu == cv) continue;
        merged.adj[cu][cv] += w;
        merged.adj[cv][cu] += w;
      }
    for (int i = 0; i < n; ++i) assignment[i] = relabel[assignment[i]];
    wg = std::move(merged);
  }

  CoarsenResult res;
  res.assignment = assignment;
  res.reached_target = static_cast<int>(wg.pos.size()) <= target_n;
  int m = static_cast<int>(wg.pos.size());
  res.graph.vertices.resize(m, 3);
  for (int i = 0; i < m; ++i) res.graph.vertices.row(i) = wg.pos[i].transpose();
  for (int u = 0; u < m; ++u)
    for (const auto& [v, w] : wg.adj[u]) {
      if (u < v) {
        res.graph.edges.emplace_back(u, v);
        res.graph.edge_weights.push_back(w);
      }
    }
  return res;
}

}  // namespace hipart
