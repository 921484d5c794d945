#pragma once

#include "hipart/msst.hpp"

namespace hipart {

// Token pairs in center-to-periphery order: row i holds the sparse token of
// part gen_order[i] and its r dense tokens.
struct TokenGrid {
  std::vector<int> q_s;               // one per pair
  std::vector<std::vector<int>> q_d;  // r per pair
};

TokenGrid grid_from_tokens(const SkeletonHierarchy& h, const MsstModel::Tokens& t);
MsstModel::Tokens tokens_from_grid(const SkeletonHierarchy& h, const TokenGrid& grid);
void validate_grid(const TokenGrid& grid, const SkeletonHierarchy& h, int k_sparse, int k_dense);

class HiarmModel {
 public:
  HiarmModel(const RunConfig& cfg, const SkeletonHierarchy& h, uint64_t init_seed);

  struct TeacherOut {
    nn::Var sparse_logits;  // J_s x K_s
    nn::Var dense_logits;   // (J_s * r) x K_d, pair-major
  };

  // Teacher-forced pass over one sample; dropout applies when rate > 0 and
  // rng is given.
  TeacherOut teacher_forward(nn::Graph& g, const Mat& x_s, const TokenGrid& grid,
                             const Codebook& cs, const Codebook& cd, double dropout_rate,
                             Rng* rng, bool with_grad) const;

  struct GenStats {
    int gcsab_steps = 0;
    int ph_substeps = 0;
  };

  // Alg.-1-style argmax decode. use_cache switches between incremental
  // KV-cached GCSAB extension and full-sequence recomputation.
  TokenGrid generate(const Mat& x_s, const Codebook& cs, const Codebook& cd,
                     GenStats* stats = nullptr, bool use_cache = true) const;

  // Next-token reference decoder built from the same blocks: one PH sub-step
  // and one backbone extension per emitted token.
  TokenGrid generate_reference(const Mat& x_s, const Codebook& cs, const Codebook& cd,
                               GenStats* stats = nullptr) const;

  int dim() const { return dim_; }
  int r() const { return h_.r; }
  const SkeletonHierarchy& hierarchy() const { return h_; }

  nn::ParamStore ps;

 private:
  Mat embed_sparse_eval(int q, const Codebook& cs) const;
  Mat embed_dense_eval(int q, const Codebook& cd) const;
  Mat lsab_summary_eval(const Mat& pair_embs) const;         // (1+r x D) -> 1 x D
  Mat ph_outputs_eval(const Mat& h_row, const Mat& cond) const;  // 1+r x D
  int argmax_row(const Eigen::RowVectorXd& v) const;

  SkeletonHierarchy h_;
  int dim_, heads_, k_sparse_, k_dense_;
  bool single_pass_;

  nn::Linear pc_;           // flattened x_s -> D (SOS projector)
  int start_emb_ = -1;      // conditioning slot for the first sparse sub-step
  nn::Linear emb_s_, emb_d_;  // codebook entry -> D
  int pos_lsab_ = -1, pos_gcsab_ = -1, pos_ph_ = -1;
  std::vector<nn::AttentionBlock> lsab_, gcsab_, ph_;
  nn::Linear head_s_, head_d_;
};

nn::Var stage2_loss(nn::Graph& g, const HiarmModel::TeacherOut& out, const TokenGrid& grid,
                    double lambda_d, double* ce_sparse = nullptr, double* ce_dense = nullptr);

struct Stage2EpochMetrics {
  int epoch = 0;
  double ce_sparse = 0, ce_dense = 0, total = 0;
};

struct Stage2Result {
  std::vector<Stage2EpochMetrics> epochs;
  bool aborted = false;
};

// Teacher-forced training over precomputed token grids; `targets` is aligned
// with `data`. Conditioning is the clean sparse pose or, with probability
// cond_occlude_prob, an occluded variant.
Stage2Result train_stage2(HiarmModel& m, nn::AdamW& opt, const std::vector<NormSample>& data,
                          const std::vector<TokenGrid>& targets, const MsstModel& msst,
                          const RunConfig& cfg, int epoch_begin, int epoch_end);

// Mean teacher-forced CE terms over a dataset (no dropout, no updates).
Stage2EpochMetrics eval_stage2(const HiarmModel& m, const std::vector<NormSample>& data,
                               const std::vector<TokenGrid>& targets, const MsstModel& msst,
                               const RunConfig& cfg);

}  // namespace hipart
