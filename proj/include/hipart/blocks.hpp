#pragma once

#include <map>
#include <string>
#include <vector>

#include "hipart/graph.hpp"

namespace hipart::nn {

// Named parameter table. Values live here; graphs bind them per forward pass.
class ParamStore {
 public:
  int add(const std::string& name, int rows, int cols, double init_std, Rng& rng);
  int add_zeros(const std::string& name, int rows, int cols);
  int add_ones(const std::string& name, int rows, int cols);

  Mat& value(int id) { return values_[id]; }
  const Mat& value(int id) const { return values_[id]; }
  const std::string& name(int id) const { return names_[id]; }
  int find(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(values_.size()); }
  size_t scalar_count() const;

  // Snap every value to its float32 representation. Applied after each
  // optimizer step so the f32 checkpoint format is lossless.
  void round_to_f32();

  Var bind(Graph& g, int id, bool with_grad = true) const {
    return with_grad ? g.param(values_[id], id) : g.constant(values_[id]);
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::map<std::string, int> index_;
};

struct Linear {
  int w = -1, b = -1;
  int in = 0, out = 0;
  static Linear create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
  Var apply(Graph& g, const ParamStore& ps, Var x, bool with_grad = true) const;
  Mat apply_eval(const ParamStore& ps, const Mat& x) const;
};

struct LayerNormParams {
  int gain = -1, bias = -1;
  static LayerNormParams create(ParamStore& ps, const std::string& prefix, int dim);
  Var apply(Graph& g, const ParamStore& ps, Var x, bool with_grad = true) const;
  Mat apply_eval(const ParamStore& ps, const Mat& x) const;
};

// Pre-norm MLP-Mixer block: token mixing across the joint axis, then channel
// mixing across the embedding axis, each with a residual.
struct MixerBlock {
  LayerNormParams ln_token, ln_channel;
  Linear tok1, tok2, ch1, ch2;
  int tokens = 0, dim = 0;
  static MixerBlock create(ParamStore& ps, const std::string& prefix, int tokens, int dim,
                           int token_hidden, int channel_hidden, Rng& rng);
  Var apply(Graph& g, const ParamStore& ps, Var x, bool with_grad = true) const;
  Mat apply_eval(const ParamStore& ps, const Mat& x) const;
};

// Pre-norm multi-head self-attention block with a feed-forward sublayer.
struct AttentionBlock {
  LayerNormParams ln_attn, ln_ffn;
  Linear wq, wk, wv, wo, ff1, ff2;
  int dim = 0, heads = 0;

  static AttentionBlock create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                               int ffn_hidden, Rng& rng);

  // Teacher-forced / full-sequence path. Dropout (when rate > 0 and rng is
  // given) is applied to both residual branches.
  Var apply(Graph& g, const ParamStore& ps, Var x, bool causal, double dropout_rate = 0.0,
            Rng* rng = nullptr, bool with_grad = true) const;

  Mat apply_eval(const ParamStore& ps, const Mat& x, bool causal) const;

  // Per-call decode state for incremental generation.
  struct Cache {
    Mat k, v;  // grows one row per appended position
  };
  // Appends one position and returns its output row (1 x dim).
  Mat apply_incremental(const ParamStore& ps, Cache& cache, const Mat& x_row) const;
};

Mat causal_mask(int n);  // 0 on/below diagonal, -inf above

}  // namespace hipart::nn
