#include "hipart/probes.hpp"

#include <cstdio>
#include <fstream>

namespace hipart {

namespace {

Mat cosine_block(const Mat& a, const Mat& b) {
  Mat out(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      double na = a.row(i).norm(), nb = b.row(j).norm();
      out(i, j) = (na < 1e-12 || nb < 1e-12) ? 0.0 : a.row(i).dot(b.row(j)) / (na * nb);
    }
  return out;
}

Mat take_rows(const Mat& m, const std::vector<int>& idx) {
  Mat out(static_cast<int>(idx.size()), m.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<int>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

CodebookProbe probe_codebook(const MsstModel& m, int k, uint64_t seed) {
  if (k < 1 || k > m.cb_s.K() || k > m.cb_d.K())
    throw DomainError("probe token count exceeds codebook size");
  Mat s_first = m.cb_s.entries.topRows(k);
  Mat d_first = m.cb_d.entries.topRows(k);

  std::vector<int> all_s(m.cb_s.K()), all_d(m.cb_d.K());
  for (int i = 0; i < m.cb_s.K(); ++i) all_s[i] = i;
  for (int i = 0; i < m.cb_d.K(); ++i) all_d[i] = i;
  Rng rng = Rng::derive(seed, 0x9806E);
  rng.shuffle(all_s);
  rng.shuffle(all_d);
  all_s.resize(k);
  all_d.resize(k);

  CodebookProbe p;
  p.ss = cosine_block(s_first, s_first);
  p.dd = cosine_block(d_first, d_first);
  p.sd_first = cosine_block(s_first, d_first);
  p.sd_rand = cosine_block(take_rows(m.cb_s.entries, all_s), take_rows(m.cb_d.entries, all_d));
  return p;
}

void write_matrix_csv(const Mat& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  char buf[40];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", m(i, j));
      os << (j ? "," : "") << buf;
    }
    os << "\n";
  }
}

TokenProbe probe_tokens(const MsstModel& m, const Mat& x_f_norm, int part, uint64_t seed) {
  const SkeletonHierarchy& h = m.hierarchy();
  if (part < 0 || part >= h.j_sparse) throw DomainError("invalid part index");

  MsstModel::Tokens t = m.encode_tokens(x_f_norm);
  auto [xd_base, xf_base] = m.decode_tokens(t.q_s, t.q_d);

  Rng rng = Rng::derive(seed, 0x9807);
  auto pick_other = [&](int cur, int k_max) {
    int q = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k_max)));
    if (q == cur) q = (q + 1) % k_max;
    return q;
  };

  TokenProbe p;
  p.part = part;
  p.old_sparse = t.q_s[part];
  p.new_sparse = pick_other(p.old_sparse, m.cb_s.K());

  auto displacement_by_part = [&](const Mat& xf) {
    std::vector<double> d(h.j_sparse, 0.0);
    for (int sp = 0; sp < h.j_sparse; ++sp)
      for (int dj : h.part_map_sd[sp])
        for (int fj : h.part_map_df[dj]) d[sp] += (xf.row(fj) - xf_base.row(fj)).norm();
    return d;
  };

  std::vector<int> qs = t.q_s;
  qs[part] = p.new_sparse;
  p.sparse_swap_by_part = displacement_by_part(m.decode_tokens(qs, t.q_d).second);

  p.dense_joint = h.part_map_sd[part][0];
  p.old_dense = t.q_d[p.dense_joint];
  p.new_dense = pick_other(p.old_dense, m.cb_d.K());
  std::vector<int> qd = t.q_d;
  qd[p.dense_joint] = p.new_dense;
  p.dense_swap_by_part = displacement_by_part(m.decode_tokens(t.q_s, qd).second);
  return p;
}

void write_token_probe(const TokenProbe& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "part " << p.part << "\n";
  os << "sparse_swap " << p.old_sparse << " -> " << p.new_sparse << "\n";
  os << "dense_swap joint " << p.dense_joint << " " << p.old_dense << " -> " << p.new_dense
     << "\n";
  os << "part,sparse_swap_displacement,dense_swap_displacement\n";
  char buf[96];
  for (size_t i = 0; i < p.sparse_swap_by_part.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g", i, p.sparse_swap_by_part[i],
                  p.dense_swap_by_part[i]);
    os << buf << "\n";
  }
}

}  // namespace hipart
