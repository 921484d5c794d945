#pragma once

#include "hipart/blocks.hpp"
#include "hipart/config.hpp"
#include "hipart/optim.hpp"
#include "hipart/skeleton.hpp"

namespace hipart {

// EMA-updated vector quantization codebook.
struct Codebook {
  Mat entries;     // K x D
  Vec ema_counts;  // K
  Mat ema_sums;    // K x D
  bool initialized = false;

  int K() const { return static_cast<int>(entries.rows()); }
  int D() const { return static_cast<int>(entries.cols()); }

  void allocate(int k, int d);
  // Seeds entries by sampling rows of the first-batch embeddings.
  void init_from_rows(const Mat& rows, Rng& rng);
};

struct QuantizeResult {
  std::vector<int> indices;
  Mat zq;  // entries[indices[j]] per row
};

// Row-wise nearest codebook entry; ties break to the lowest index.
QuantizeResult quantize(const Mat& z, const Codebook& c);

void ema_update(Codebook& c, const Mat& z, const std::vector<int>& q, double gamma);

// exp(entropy) of a code-usage histogram.
double perplexity(const std::vector<long long>& counts);

// Normalized training sample shared by the three stages.
struct NormSample {
  Mat x_f, x_d, x_s;  // 2D levels in normalized coordinates
  int action = 0;
};

struct Stage1Weights {
  double beta = 0.25;
  double lambda_local = 1.0;
  double lambda_global = 0.3;
  double tau = 0.07;
};

struct Stage1Terms {
  double recon_f = 0, recon_d = 0, codebook = 0, commit = 0, local = 0, global = 0, total = 0;
};

class MsstModel {
 public:
  MsstModel(const RunConfig& cfg, const SkeletonHierarchy& h, uint64_t init_seed);

  struct Forward {
    nn::Var z_d, z_s;   // encoder embeddings before quantization
    nn::Var zp_d;       // dense pre-quantization embedding (concat + projection)
    std::vector<int> q_s, q_d;
    nn::Var zq_s, zq_d;  // straight-through quantized embeddings
    nn::Var zs_up;       // D_s output upsampled to the dense level
    nn::Var xhat_f, xhat_d;
    nn::Var pa;  // 1 x A action logits
  };

  // Teacher forward over one sample. Codebooks must be initialized.
  Forward forward(nn::Graph& g, const Mat& x_f, bool with_grad) const;

  // Encoder-only pass used for codebook seeding: returns (z_s rows, and when
  // the sparse codebook is ready, zp_d rows), without touching decoders.
  Mat encode_sparse_rows(const Mat& x_f) const;
  Mat encode_dense_rows(const Mat& x_f) const;

  struct Tokens {
    std::vector<int> q_s, q_d;
  };
  Tokens encode_tokens(const Mat& x_f) const;

  // Decoder-only pass from token indices: returns (x̂_d, x̂_f).
  std::pair<Mat, Mat> decode_tokens(const std::vector<int>& q_s,
                                    const std::vector<int>& q_d) const;

  const SkeletonHierarchy& hierarchy() const { return h_; }
  int embed_dim() const { return dim_; }
  int codebook_dim() const { return cdim_; }
  int num_actions() const { return num_actions_; }

  nn::ParamStore ps;
  Codebook cb_s, cb_d;

 private:
  friend struct MsstAccess;
  nn::Var run_encoder(nn::Graph& g, const Mat& x_f, bool wg) const;            // z_d
  nn::Var run_encoder_sparse(nn::Graph& g, nn::Var z_d, bool wg) const;        // z_s
  nn::Var run_dsparse(nn::Graph& g, nn::Var zq_s, bool wg) const;              // ẑ'_s dense level
  nn::Var run_zpd(nn::Graph& g, nn::Var z_d, nn::Var zs_up, bool wg) const;    // z'_d
  nn::Var run_ddense(nn::Graph& g, nn::Var zq_d, bool wg) const;               // x̂_d
  nn::Var run_dfine(nn::Graph& g, nn::Var zq_d, nn::Var zs_up, bool wg) const; // x̂_f
  nn::Var run_paction(nn::Graph& g, nn::Var zq_s, nn::Var zq_d, bool wg) const;

  SkeletonHierarchy h_;
  int dim_, ed_dim_, cdim_, num_actions_;
  Mat pool_df_, pool_sd_;  // averaging matrices (dense x fine), (sparse x dense)
  Mat up_sd_, up_df_;      // replication matrices (dense x sparse), (fine x dense)

  nn::Linear in_f_;
  int pos_f_ = -1, pos_dec_f_ = -1;
  std::vector<nn::MixerBlock> enc_f_;
  nn::Linear proj_zd_;
  nn::Linear proj_de_;
  int pos_d_ = -1;
  std::vector<nn::MixerBlock> enc_d_;
  nn::Linear proj_zs_;
  nn::Linear dsparse_in_;
  std::vector<nn::MixerBlock> dsparse_blocks_;
  nn::Linear proj_dense_;
  nn::Linear ddense_in_, ddense_out_;
  std::vector<nn::MixerBlock> ddense_blocks_;
  nn::Linear dfine_in_, dfine_out_;
  std::vector<nn::MixerBlock> dfine_blocks_;
  nn::Linear pa_in_, pa_out_;
  std::vector<nn::MixerBlock> pa_blocks_;
};

nn::Var local_alignment_loss(nn::Graph& g, nn::Var zq_s, nn::Var zq_d,
                             const SkeletonHierarchy& h, double tau);
nn::Var global_alignment_loss(nn::Graph& g, nn::Var pa_logits, int action);

// Eq.-style total with stop-gradient / commitment split; `terms` (optional)
// receives the scalar breakdown.
nn::Var stage1_loss(nn::Graph& g, const MsstModel& m, const MsstModel::Forward& f,
                    const Mat& x_f, const Mat& x_d, int action, const Stage1Weights& w,
                    Stage1Terms* terms);

struct Stage1EpochMetrics {
  int epoch = 0;
  double mse_f = 0, mse_d = 0, total = 0;
  double perplexity_s = 0, perplexity_d = 0;
};

struct Stage1Result {
  std::vector<Stage1EpochMetrics> epochs;
  bool aborted = false;
};

// Alg.-A1-style loop over [epoch_begin, epoch_end). The optimizer carries
// state across calls so checkpointed training resumes exactly.
Stage1Result train_stage1(MsstModel& m, nn::AdamW& opt, const std::vector<NormSample>& data,
                          const RunConfig& cfg, int epoch_begin, int epoch_end);

}  // namespace hipart
