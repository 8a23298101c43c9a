#pragma once

// Querying transformer: K learned query vectors pass through layers of
// self-attention, cross-attention to the fused sensor embedding, and a
// feedforward network (each followed by add & norm), then a linear map to
// the decoder width. Temporal tokens concatenate the outputs for n time
// segments in order; noise injection perturbs them during training.

#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/checkpoint.hpp"
#include "s2t/error.hpp"
#include "s2t/numerics/layers.hpp"

namespace s2t::bridge {

struct QFormerConfig {
  std::size_t queries = 8;
  std::size_t layers = 2;
  std::size_t d_hidden = 64;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t ffn_hidden = 128;
  std::size_t d_input = 64;   // sensor embedding (teacher) dim
  std::size_t d_model = 128;  // decoder embedding dim

  void validate() const {
    if (queries == 0 || layers == 0 || d_hidden == 0 || heads == 0 || head_dim == 0 || ffn_hidden == 0 ||
        d_input == 0 || d_model == 0) {
      throw ConfigError("qformer: every size must be positive");
    }
    if (heads * head_dim != d_hidden) throw ConfigError("qformer: heads * head_dim must equal d_hidden");
  }

  nlohmann::ordered_json to_json() const {
    return {{"queries", queries}, {"layers", layers},         {"d_hidden", d_hidden}, {"heads", heads},
            {"head_dim", head_dim}, {"ffn_hidden", ffn_hidden}, {"d_input", d_input},   {"d_model", d_model}};
  }

  static QFormerConfig from_json(const nlohmann::json& j) { return from_json(j, QFormerConfig{}); }
  static QFormerConfig from_json(const nlohmann::json& j, QFormerConfig c) {
    c.queries = j.value("queries", c.queries);
    c.layers = j.value("layers", c.layers);
    c.d_hidden = j.value("d_hidden", c.d_hidden);
    c.heads = j.value("heads", c.heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.d_input = j.value("d_input", c.d_input);
    c.d_model = j.value("d_model", c.d_model);
    return c;
  }
};

class QFormerLayer {
 public:
  QFormerLayer(const std::string& name, const QFormerConfig& c, Rng& rng)
      : self_attn_(name + ".self_attn", c.d_hidden, c.d_hidden, c.heads, c.head_dim, rng),
        norm1_(name + ".norm1", c.d_hidden),
        cross_attn_(name + ".cross_attn", c.d_hidden, c.d_input, c.heads, c.head_dim, rng),
        norm2_(name + ".norm2", c.d_hidden),
        ffn_(name + ".ffn", c.d_hidden, c.ffn_hidden, rng),
        norm3_(name + ".norm3", c.d_hidden) {}

  ad::Var operator()(const ad::Var& q, const ad::Var& context) const {
    const ad::Var h1 = norm1_(ad::add(q, self_attn_(q, q, false)));
    const ad::Var h2 = norm2_(ad::add(h1, cross_attn_(h1, context, false)));
    return norm3_(ad::add(h2, ffn_(h2)));
  }

  void parameters(std::vector<Parameter*>& out) {
    self_attn_.parameters(out);
    norm1_.parameters(out);
    cross_attn_.parameters(out);
    norm2_.parameters(out);
    ffn_.parameters(out);
    norm3_.parameters(out);
  }

 private:
  nn::MultiHeadAttention self_attn_;
  nn::LayerNorm norm1_;
  nn::MultiHeadAttention cross_attn_;
  nn::LayerNorm norm2_;
  nn::FeedForward ffn_;
  nn::LayerNorm norm3_;
};

class QFormer {
 public:
  QFormer(const QFormerConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng = Rng(seed).substream("qformer.init");
    queries_ = Parameter("qformer.queries", glorot_uniform(rng, config_.queries, config_.d_hidden));
    for (std::size_t i = 0; i < config_.layers; ++i) layers_.emplace_back("qformer.layer" + std::to_string(i), config_, rng);
    out_ = nn::Linear("qformer.out", config_.d_hidden, config_.d_model, rng);
  }

  const QFormerConfig& config() const { return config_; }

  /// K x d_model tokens for one sensor embedding (1 x d_input).
  ad::Var operator()(const ad::Var& y_sens) const {
    if (y_sens.rows() != 1 || y_sens.cols() != config_.d_input) {
      throw std::invalid_argument("qformer: sensor embedding has shape " + shape_string(y_sens.value().shape()) +
                                  ", expected 1 x " + std::to_string(config_.d_input));
    }
    ad::Var h = ad::param(const_cast<Parameter&>(queries_));
    for (const auto& layer : layers_) h = layer(h, y_sens);
    return out_(h);
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&queries_};
    for (auto& l : layers_) l.parameters(out);
    out_.parameters(out);
    return out;
  }
  std::vector<const Parameter*> parameters() const { return nn::as_const(const_cast<QFormer*>(this)->parameters()); }

  ModelCheckpoint to_checkpoint(std::uint64_t seed, std::string stage, std::string parent = {}) {
    return make_checkpoint(parameters(), config_.to_json(), "qformer", std::move(stage), seed, std::move(parent));
  }

  static QFormer from_checkpoint(const ModelCheckpoint& c, const QFormerConfig* expected = nullptr) {
    if (c.manifest.value("kind", "") != "qformer") throw ConfigError("checkpoint is not a Q-former");
    if (expected) require_architecture(c, expected->to_json());
    QFormer q(QFormerConfig::from_json(c.manifest.at("architecture")), 0);
    restore_parameters(c, q.parameters());
    return q;
  }

 private:
  QFormerConfig config_;
  Parameter queries_;
  std::vector<QFormerLayer> layers_;
  nn::Linear out_;
};

/// Concatenate the Q-former outputs of n segments in time order (n*K rows).
inline ad::Var assemble_temporal(const std::vector<ad::Var>& segments, const QFormer& qf) {
  if (segments.empty()) throw std::invalid_argument("assemble_temporal: no segments");
  if (segments.size() == 1) return qf(segments.front());
  std::vector<ad::Var> blocks;
  blocks.reserve(segments.size());
  for (const auto& s : segments) blocks.push_back(qf(s));
  return ad::concat_rows(blocks);
}

/// Add independent N(0, variance) noise to every coordinate. Variance 0
/// returns the input unchanged.
inline ad::Var inject_noise(const ad::Var& tokens, double variance, Rng& rng) {
  if (!(variance >= 0.0)) throw std::invalid_argument("inject_noise: variance must be non-negative");
  if (variance == 0.0) return tokens;
  return ad::add(tokens, ad::constant(gaussian_sample(rng, tokens.value().shape(), variance)));
}

}  // namespace s2t::bridge
