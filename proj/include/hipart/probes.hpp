#pragma once

#include <string>

#include "hipart/msst.hpp"

namespace hipart {

struct CodebookProbe {
  Mat ss;        // sparse x sparse cosine, first k tokens
  Mat dd;        // dense x dense cosine, first k tokens
  Mat sd_first;  // sparse x dense, first k of each
  Mat sd_rand;   // sparse x dense, k random tokens of each
};

CodebookProbe probe_codebook(const MsstModel& m, int k, uint64_t seed);

void write_matrix_csv(const Mat& m, const std::string& path);

struct TokenProbe {
  int part = 0;
  int old_sparse = 0, new_sparse = 0;
  int dense_joint = 0, old_dense = 0, new_dense = 0;
  // total fine-joint displacement of x̂_f grouped by owning part
  std::vector<double> sparse_swap_by_part;
  std::vector<double> dense_swap_by_part;
};

// Replaces the sparse token (then one dense token) of `part` with a different
// codebook index and measures the per-part displacement of the decoded fine
// pose.
TokenProbe probe_tokens(const MsstModel& m, const Mat& x_f_norm, int part, uint64_t seed);

void write_token_probe(const TokenProbe& p, const std::string& path);

}  // namespace hipart
