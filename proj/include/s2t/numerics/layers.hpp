#pragma once

// Transformer building blocks over the autodiff graph. Every layer owns its
// Parameters and appends pointers to them, in a fixed order, via
// parameters(); that order is the checkpoint order.

#include <cmath>
#include <string>
#include <vector>

#include "s2t/numerics/autodiff.hpp"

namespace s2t::nn {

/// Forward-pass context. Dropout is active only when `train` is set.
struct Pass {
  bool train = false;
  Rng* rng = nullptr;

  ad::Var dropout(const ad::Var& x, double p) const {
    if (!train || p <= 0.0) return x;
    return ad::dropout(x, p, *rng);
  }
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight_(name + ".weight", glorot_uniform(rng, in, out)), bias_(name + ".bias", Array::matrix(1, out)) {}

  ad::Var operator()(const ad::Var& x) const {
    return ad::add_row(ad::matmul(x, ad::param(mut(weight_))), ad::param(mut(bias_)));
  }

  std::size_t in_dim() const { return weight_.value.rows(); }
  std::size_t out_dim() const { return weight_.value.cols(); }

  void parameters(std::vector<Parameter*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  // Graph leaves keep a pointer to the Parameter for gradient accumulation.
  static Parameter& mut(const Parameter& p) { return const_cast<Parameter&>(p); }

  Parameter weight_;
  Parameter bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim)
      : gain_(name + ".gain", Array::matrix(1, dim, 1.0)), bias_(name + ".bias", Array::matrix(1, dim)) {}

  ad::Var operator()(const ad::Var& x) const {
    return ad::layer_norm(x, ad::param(const_cast<Parameter&>(gain_)), ad::param(const_cast<Parameter&>(bias_)));
  }

  void parameters(std::vector<Parameter*>& out) {
    out.push_back(&gain_);
    out.push_back(&bias_);
  }

 private:
  Parameter gain_;
  Parameter bias_;
};

/// Multi-head scaled dot-product attention. Queries come from `x`, keys and
/// values from `context`, which may have a different width.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t d_context, std::size_t heads,
                     std::size_t head_dim, Rng& rng)
      : heads_(heads),
        head_dim_(head_dim),
        query_(name + ".query", d_model, heads * head_dim, rng),
        key_(name + ".key", d_context, heads * head_dim, rng),
        value_(name + ".value", d_context, heads * head_dim, rng),
        out_(name + ".out", heads * head_dim, d_model, rng) {}

  ad::Var operator()(const ad::Var& x, const ad::Var& context, bool causal) const {
    const ad::Var q = query_(x);
    const ad::Var k = key_(context);
    const ad::Var v = value_(context);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    std::vector<ad::Var> heads;
    heads.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t off = h * head_dim_;
      const ad::Var scores =
          ad::scale(ad::matmul_nt(ad::slice_cols(q, off, head_dim_), ad::slice_cols(k, off, head_dim_)), inv_sqrt);
      heads.push_back(ad::matmul(ad::softmax_rows(scores, causal), ad::slice_cols(v, off, head_dim_)));
    }
    return out_(heads_ == 1 ? heads.front() : ad::concat_cols(heads));
  }

  void parameters(std::vector<Parameter*>& out) {
    query_.parameters(out);
    key_.parameters(out);
    value_.parameters(out);
    out_.parameters(out);
  }

 private:
  std::size_t heads_ = 1;
  std::size_t head_dim_ = 1;
  Linear query_, key_, value_, out_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t d_model, std::size_t hidden, Rng& rng)
      : in_(name + ".in", d_model, hidden, rng), out_(name + ".out", hidden, d_model, rng) {}

  ad::Var operator()(const ad::Var& x) const { return out_(ad::gelu(in_(x))); }

  void parameters(std::vector<Parameter*>& out) {
    in_.parameters(out);
    out_.parameters(out);
  }

 private:
  Linear in_, out_;
};

struct BlockShape {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t ffn_hidden = 128;
  double dropout = 0.0;
};

/// Encoder layer with normalization after each residual sublayer.
class PostNormBlock {
 public:
  PostNormBlock() = default;
  PostNormBlock(const std::string& name, const BlockShape& s, Rng& rng)
      : dropout_(s.dropout),
        attn_(name + ".attn", s.d_model, s.d_model, s.heads, s.head_dim, rng),
        norm1_(name + ".norm1", s.d_model),
        ffn_(name + ".ffn", s.d_model, s.ffn_hidden, rng),
        norm2_(name + ".norm2", s.d_model) {}

  ad::Var operator()(const ad::Var& x, const Pass& pass) const {
    const ad::Var h = norm1_(ad::add(x, pass.dropout(attn_(x, x, false), dropout_)));
    return norm2_(ad::add(h, pass.dropout(ffn_(h), dropout_)));
  }

  void parameters(std::vector<Parameter*>& out) {
    attn_.parameters(out);
    norm1_.parameters(out);
    ffn_.parameters(out);
    norm2_.parameters(out);
  }

 private:
  double dropout_ = 0.0;
  MultiHeadAttention attn_;
  LayerNorm norm1_;
  FeedForward ffn_;
  LayerNorm norm2_;
};

/// Causal decoder layer with normalization before each sublayer.
class PreNormCausalBlock {
 public:
  PreNormCausalBlock() = default;
  PreNormCausalBlock(const std::string& name, const BlockShape& s, Rng& rng)
      : norm1_(name + ".norm1", s.d_model),
        attn_(name + ".attn", s.d_model, s.d_model, s.heads, s.head_dim, rng),
        norm2_(name + ".norm2", s.d_model),
        ffn_(name + ".ffn", s.d_model, s.ffn_hidden, rng) {}

  ad::Var operator()(const ad::Var& x) const {
    const ad::Var n1 = norm1_(x);
    const ad::Var h = ad::add(x, attn_(n1, n1, true));
    return ad::add(h, ffn_(norm2_(h)));
  }

  void parameters(std::vector<Parameter*>& out) {
    norm1_.parameters(out);
    attn_.parameters(out);
    norm2_.parameters(out);
    ffn_.parameters(out);
  }

 private:
  LayerNorm norm1_;
  MultiHeadAttention attn_;
  LayerNorm norm2_;
  FeedForward ffn_;
};

inline std::vector<const Parameter*> as_const(const std::vector<Parameter*>& params) {
  return {params.begin(), params.end()};
}

inline void set_trainable(const std::vector<Parameter*>& params, bool trainable) {
  for (Parameter* p : params) p->trainable = trainable;
}

}  // namespace s2t::nn
