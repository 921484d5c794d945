#include "hipart/blocks.hpp"

#include <limits>

namespace hipart::nn {

int ParamStore::add(const std::string& name, int rows, int cols, double init_std, Rng& rng) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = init_std > 0 ? init_std * rng.normal() : 0.0;
  // keep stored values exactly f32-representable from the start
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<double>(static_cast<float>(m(i, j)));
  index_[name] = static_cast<int>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(m));
  return static_cast<int>(values_.size()) - 1;
}

int ParamStore::add_zeros(const std::string& name, int rows, int cols) {
  Rng dummy(0);
  return add(name, rows, cols, 0.0, dummy);
}

int ParamStore::add_ones(const std::string& name, int rows, int cols) {
  int id = add_zeros(name, rows, cols);
  values_[id].setOnes();
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

size_t ParamStore::scalar_count() const {
  size_t n = 0;
  for (const auto& v : values_) n += static_cast<size_t>(v.size());
  return n;
}

void ParamStore::round_to_f32() {
  for (auto& v : values_)
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) v(i, j) = static_cast<double>(static_cast<float>(v(i, j)));
}

// ---------------------------------------------------------------------------

Linear Linear::create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add(prefix + ".w", in, out, std::sqrt(2.0 / (in + out)), rng);
  l.b = ps.add_zeros(prefix + ".b", 1, out);
  return l;
}

Var Linear::apply(Graph& g, const ParamStore& ps, Var x, bool with_grad) const {
  return add_rowvec(g, matmul(g, x, ps.bind(g, w, with_grad)), ps.bind(g, b, with_grad));
}

Mat Linear::apply_eval(const ParamStore& ps, const Mat& x) const {
  return (x * ps.value(w)).rowwise() + ps.value(b).row(0);
}

LayerNormParams LayerNormParams::create(ParamStore& ps, const std::string& prefix, int dim) {
  LayerNormParams ln;
  ln.gain = ps.add_ones(prefix + ".gain", 1, dim);
  ln.bias = ps.add_zeros(prefix + ".bias", 1, dim);
  return ln;
}

Var LayerNormParams::apply(Graph& g, const ParamStore& ps, Var x, bool with_grad) const {
  return layer_norm(g, x, ps.bind(g, gain, with_grad), ps.bind(g, bias, with_grad));
}

Mat LayerNormParams::apply_eval(const ParamStore& ps, const Mat& x) const {
  Mat y(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    y.row(i) = (x.row(i).array() - mu) / std::sqrt(var + 1e-6);
  }
  return (y.array().rowwise() * ps.value(gain).row(0).array()).rowwise() +
         ps.value(bias).row(0).array();
}

// ---------------------------------------------------------------------------

MixerBlock MixerBlock::create(ParamStore& ps, const std::string& prefix, int tokens, int dim,
                              int token_hidden, int channel_hidden, Rng& rng) {
  MixerBlock b;
  b.tokens = tokens;
  b.dim = dim;
  b.ln_token = LayerNormParams::create(ps, prefix + ".ln_tok", dim);
  b.ln_channel = LayerNormParams::create(ps, prefix + ".ln_ch", dim);
  b.tok1 = Linear::create(ps, prefix + ".tok1", tokens, token_hidden, rng);
  b.tok2 = Linear::create(ps, prefix + ".tok2", token_hidden, tokens, rng);
  b.ch1 = Linear::create(ps, prefix + ".ch1", dim, channel_hidden, rng);
  b.ch2 = Linear::create(ps, prefix + ".ch2", channel_hidden, dim, rng);
  return b;
}

Var MixerBlock::apply(Graph& g, const ParamStore& ps, Var x, bool wg) const {
  if (x.rows() != tokens || x.cols() != dim) throw NumericError("mixer block shape mismatch");
  Var t = transpose(g, ln_token.apply(g, ps, x, wg));           // D x J
  t = tok2.apply(g, ps, gelu(g, tok1.apply(g, ps, t, wg)), wg);  // D x J
  Var y = add(g, x, transpose(g, t));
  Var c = ln_channel.apply(g, ps, y, wg);
  c = ch2.apply(g, ps, gelu(g, ch1.apply(g, ps, c, wg)), wg);
  return add(g, y, c);
}

Mat MixerBlock::apply_eval(const ParamStore& ps, const Mat& x) const {
  Mat t = ln_token.apply_eval(ps, x).transpose();
  t = tok2.apply_eval(ps, (tok1.apply_eval(ps, t))
                              .unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)); }));
  Mat y = x + t.transpose();
  Mat c = ln_channel.apply_eval(ps, y);
  c = ch2.apply_eval(ps, (ch1.apply_eval(ps, c))
                             .unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)); }));
  return y + c;
}

// ---------------------------------------------------------------------------

AttentionBlock AttentionBlock::create(ParamStore& ps, const std::string& prefix, int dim,
                                      int heads, int ffn_hidden, Rng& rng) {
  if (dim % heads != 0) throw ConfigError("attention dim must be divisible by heads");
  AttentionBlock b;
  b.dim = dim;
  b.heads = heads;
  b.ln_attn = LayerNormParams::create(ps, prefix + ".ln_attn", dim);
  b.ln_ffn = LayerNormParams::create(ps, prefix + ".ln_ffn", dim);
  b.wq = Linear::create(ps, prefix + ".wq", dim, dim, rng);
  b.wk = Linear::create(ps, prefix + ".wk", dim, dim, rng);
  b.wv = Linear::create(ps, prefix + ".wv", dim, dim, rng);
  b.wo = Linear::create(ps, prefix + ".wo", dim, dim, rng);
  b.ff1 = Linear::create(ps, prefix + ".ff1", dim, ffn_hidden, rng);
  b.ff2 = Linear::create(ps, prefix + ".ff2", ffn_hidden, dim, rng);
  return b;
}

Mat causal_mask(int n) {
  Mat m = Mat::Zero(n, n);
  double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(i, j) = ninf;
  return m;
}

Var AttentionBlock::apply(Graph& g, const ParamStore& ps, Var x, bool causal,
                          double dropout_rate, Rng* rng, bool wg) const {
  int L = x.rows();
  int hd = dim / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Mat mask;
  if (causal) mask = causal_mask(L);

  Var h = ln_attn.apply(g, ps, x, wg);
  Var q = wq.apply(g, ps, h, wg);
  Var k = wk.apply(g, ps, h, wg);
  Var v = wv.apply(g, ps, h, wg);

  std::vector<Var> head_outs;
  for (int hh = 0; hh < heads; ++hh) {
    Var qh = slice_cols(g, q, hh * hd, hd);
    Var kh = slice_cols(g, k, hh * hd, hd);
    Var vh = slice_cols(g, v, hh * hd, hd);
    Var scores = scale(g, matmul(g, qh, transpose(g, kh)), inv_sqrt);
    Var attn = softmax_rows(g, scores, causal ? &mask : nullptr);
    head_outs.push_back(matmul(g, attn, vh));
  }
  Var o = wo.apply(g, ps, concat_cols(g, head_outs), wg);
  if (dropout_rate > 0.0 && rng) o = dropout(g, o, dropout_rate, *rng);
  Var y = add(g, x, o);

  Var f = ff2.apply(g, ps, gelu(g, ff1.apply(g, ps, ln_ffn.apply(g, ps, y, wg), wg)), wg);
  if (dropout_rate > 0.0 && rng) f = dropout(g, f, dropout_rate, *rng);
  return add(g, y, f);
}

Mat AttentionBlock::apply_eval(const ParamStore& ps, const Mat& x, bool causal) const {
  int L = static_cast<int>(x.rows());
  int hd = dim / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat h = ln_attn.apply_eval(ps, x);
  Mat q = wq.apply_eval(ps, h);
  Mat k = wk.apply_eval(ps, h);
  Mat v = wv.apply_eval(ps, h);
  Mat concat(L, dim);
  for (int hh = 0; hh < heads; ++hh) {
    Mat scores = q.middleCols(hh * hd, hd) * k.middleCols(hh * hd, hd).transpose() * inv_sqrt;
    if (causal) scores += causal_mask(L);
    Mat attn(L, L);
    for (int i = 0; i < L; ++i) {
      double mx = scores.row(i).maxCoeff();
      Eigen::RowVectorXd e = (scores.row(i).array() - mx).exp();
      attn.row(i) = e / e.sum();
    }
    concat.middleCols(hh * hd, hd) = attn * v.middleCols(hh * hd, hd);
  }
  Mat y = x + wo.apply_eval(ps, concat);
  Mat f = ff1.apply_eval(ps, ln_ffn.apply_eval(ps, y))
              .unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t * 0.7071067811865475)); });
  return y + ff2.apply_eval(ps, f);
}

Mat AttentionBlock::apply_incremental(const ParamStore& ps, Cache& cache, const Mat& x_row) const {
  int hd = dim / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat h = ln_attn.apply_eval(ps, x_row);
  Mat q = wq.apply_eval(ps, h);
  Mat k = wk.apply_eval(ps, h);
  Mat v = wv.apply_eval(ps, h);
  if (cache.k.rows() == 0) {
    cache.k = k;
    cache.v = v;
  } else {
    cache.k.conservativeResize(cache.k.rows() + 1, Eigen::NoChange);
    cache.k.row(cache.k.rows() - 1) = k.row(0);
    cache.v.conservativeResize(cache.v.rows() + 1, Eigen::NoChange);
    cache.v.row(cache.v.rows() - 1) = v.row(0);
  }

  Mat concat(1, dim);
  for (int hh = 0; hh < heads; ++hh) {
    Eigen::RowVectorXd scores =
        q.row(0).middleCols(hh * hd, hd) * cache.k.middleCols(hh * hd, hd).transpose() * inv_sqrt;
    double mx = scores.maxCoeff();
    Eigen::RowVectorXd e = (scores.array() - mx).exp();
    Eigen::RowVectorXd attn = e / e.sum();
    concat.middleCols(hh * hd, hd) = attn * cache.v.middleCols(hh * hd, hd);
  }
  Mat y = x_row + wo.apply_eval(ps, concat);
  Mat f = ff1.apply_eval(ps, ln_ffn.apply_eval(ps, y))
              .unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t * 0.7071067811865475)); });
  return y + ff2.apply_eval(ps, f);
}

}  // namespace hipart::nn
