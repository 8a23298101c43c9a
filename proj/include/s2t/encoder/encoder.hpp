#pragma once

// Multi-modal sensor encoder. Each modality is cut into windows that a
// linear tokenizer (a 1D convolution with kernel = stride = window) maps to
// d_encoder-wide tokens; sinusoidal positions are added, a learnable CLS
// token is prepended, and a stack of post-norm transformer layers runs over
// the sequence. The CLS outputs of all modalities are concatenated and one
// linear layer projects them to the teacher dimension.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/checkpoint.hpp"
#include "s2t/error.hpp"
#include "s2t/ingest/dataset.hpp"
#include "s2t/numerics/layers.hpp"

namespace s2t::encoder {

using ingest::Modality;

struct ModalityEncoderConfig {
  std::size_t window = 10;  // samples per token
  std::size_t stride = 10;
  std::size_t layers = 2;
  std::size_t d_encoder = 64;
  std::size_t ffn_hidden = 128;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  double dropout = 0.1;
  std::size_t channels = 0;  // input features per sample; fixed by the data

  nlohmann::ordered_json to_json() const {
    return {{"window", window},       {"stride", stride}, {"layers", layers},     {"d_encoder", d_encoder},
            {"ffn_hidden", ffn_hidden}, {"heads", heads},   {"head_dim", head_dim}, {"dropout", dropout},
            {"channels", channels}};
  }

  static ModalityEncoderConfig from_json(const nlohmann::json& j) { return from_json(j, ModalityEncoderConfig{}); }
  static ModalityEncoderConfig from_json(const nlohmann::json& j, ModalityEncoderConfig base) {
    base.window = j.value("window", base.window);
    base.stride = j.value("stride", base.stride);
    base.layers = j.value("layers", base.layers);
    base.d_encoder = j.value("d_encoder", base.d_encoder);
    base.ffn_hidden = j.value("ffn_hidden", base.ffn_hidden);
    base.heads = j.value("heads", base.heads);
    base.head_dim = j.value("head_dim", base.head_dim);
    base.dropout = j.value("dropout", base.dropout);
    base.channels = j.value("channels", base.channels);
    return base;
  }
};

struct EncoderConfig {
  std::map<Modality, ModalityEncoderConfig> modalities;
  std::size_t d_output = 64;
  std::size_t teacher_dim = 64;

  /// Checks every structural invariant; channels must be known.
  void validate() const {
    if (modalities.empty()) throw ConfigError("encoder: at least one modality is required");
    if (d_output != teacher_dim) {
      throw ConfigError("encoder: d_output (" + std::to_string(d_output) + ") must equal teacher dim (" +
                        std::to_string(teacher_dim) + ")");
    }
    std::size_t d_enc = modalities.begin()->second.d_encoder;
    for (const auto& [m, c] : modalities) {
      const std::string where = "encoder." + std::string(ingest::to_string(m));
      if (c.window == 0 || c.stride == 0) throw ConfigError(where + ": window and stride must be positive");
      if (c.layers == 0 || c.ffn_hidden == 0 || c.heads == 0 || c.head_dim == 0) {
        throw ConfigError(where + ": layers, ffn_hidden, heads and head_dim must be positive");
      }
      if (c.heads * c.head_dim != c.d_encoder) {
        throw ConfigError(where + ": heads * head_dim must equal d_encoder");
      }
      if (c.d_encoder % 2 != 0) throw ConfigError(where + ": d_encoder must be even for positional encoding");
      if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError(where + ": dropout must be in [0, 1)");
      if (c.channels == 0) throw ConfigError(where + ": channel count is unknown");
      if (c.d_encoder != d_enc) throw ConfigError("encoder: every modality must share one d_encoder");
    }
  }

  std::size_t d_encoder() const { return modalities.begin()->second.d_encoder; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json mods = nlohmann::ordered_json::object();
    for (const auto& [m, c] : modalities) mods[std::string(ingest::to_string(m))] = c.to_json();
    return {{"modalities", mods}, {"d_output", d_output}, {"teacher_dim", teacher_dim}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.d_output = j.value("d_output", c.d_output);
    c.teacher_dim = j.value("teacher_dim", c.teacher_dim);
    for (const auto& [name, mj] : j.at("modalities").items()) {
      c.modalities[ingest::parse_modality(name)] = ModalityEncoderConfig::from_json(mj);
    }
    return c;
  }
};

/// Per-modality input: samples x channels of preprocessed values.
using EncoderInput = std::map<Modality, Array>;

inline Array stream_matrix(const ingest::SensorStream& s) {
  if (!s.preprocessed) {
    throw std::invalid_argument("stream " + s.clip_id + " (" + std::string(ingest::to_string(s.modality)) +
                                ") is not preprocessed");
  }
  return Array({s.samples(), s.channels}, s.values);
}

inline EncoderInput encoder_input(const ingest::ClipRecord& clip) {
  EncoderInput in;
  for (const auto& [m, s] : clip.streams) in.emplace(m, stream_matrix(s));
  return in;
}

/// Sinusoidal position code: PE(j, 2k) = sin(j / 10000^(2k/dim)), PE(j, 2k+1) = cos(same).
inline std::vector<double> positional_encoding(std::size_t position, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("positional_encoding: dim must be even and positive");
  std::vector<double> pe(dim);
  for (std::size_t k = 0; 2 * k < dim; ++k) {
    const double angle =
        static_cast<double>(position) / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(dim));
    pe[2 * k] = std::sin(angle);
    pe[2 * k + 1] = std::cos(angle);
  }
  return pe;
}

inline Array positional_table(std::size_t count, std::size_t dim) {
  std::vector<double> data;
  data.reserve(count * dim);
  for (std::size_t j = 0; j < count; ++j) {
    const auto row = positional_encoding(j, dim);
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array({count, dim}, std::move(data));
}

/// Windowed linear tokenizer over a graph value (T x d_i -> n_tok x d_encoder).
inline ad::Var tokenize_windows(const ad::Var& values, std::size_t window, std::size_t stride, const ad::Var& weight,
                                const ad::Var& bias) {
  if (values.rows() < window) {
    throw InputError("tokenize_windows: " + std::to_string(values.rows()) + " samples is fewer than window " +
                     std::to_string(window));
  }
  if (weight.rows() != window * values.cols()) {
    throw std::invalid_argument("tokenize_windows: weight has " + std::to_string(weight.rows()) + " rows, expected " +
                                std::to_string(window * values.cols()));
  }
  return ad::add_row(ad::matmul(ad::frame(values, window, stride), weight), bias);
}

inline Array tokenize_windows(const Array& values, std::size_t window, std::size_t stride, const Array& weight,
                              const Array& bias) {
  return tokenize_windows(ad::constant(values), window, stride, ad::constant(weight), ad::constant(bias)).value();
}

/// Late fusion: concatenate per-modality vectors, then one linear layer.
inline ad::Var fuse_modalities(const std::vector<ad::Var>& intermediates, const nn::Linear& fusion) {
  if (intermediates.empty()) throw std::invalid_argument("fuse_modalities: no modalities");
  const std::size_t width = intermediates.front().cols();
  std::size_t total = 0;
  for (const auto& y : intermediates) {
    if (y.rows() != 1 || y.cols() != width) {
      throw std::invalid_argument("fuse_modalities: intermediate vectors must share one length");
    }
    total += width;
  }
  if (total != fusion.in_dim()) {
    throw std::invalid_argument("fuse_modalities: concatenation has length " + std::to_string(total) +
                                ", fusion layer expects " + std::to_string(fusion.in_dim()));
  }
  return fusion(intermediates.size() == 1 ? intermediates.front() : ad::concat_cols(intermediates));
}

class ModalityEncoder {
 public:
  ModalityEncoder(const std::string& name, const ModalityEncoderConfig& c, Rng& rng)
      : config_(c),
        tok_weight_(name + ".tokenizer.weight", glorot_uniform(rng, c.window * c.channels, c.d_encoder)),
        tok_bias_(name + ".tokenizer.bias", Array::matrix(1, c.d_encoder)),
        cls_(name + ".cls", glorot_uniform(rng, 1, c.d_encoder)) {
    const nn::BlockShape shape{c.d_encoder, c.heads, c.head_dim, c.ffn_hidden, c.dropout};
    for (std::size_t i = 0; i < c.layers; ++i) blocks_.emplace_back(name + ".layer" + std::to_string(i), shape, rng);
  }

  ad::Var tokens(const ad::Var& values) const {
    if (values.cols() != config_.channels) {
      throw InputError("encoder input has " + std::to_string(values.cols()) + " channels, expected " +
                       std::to_string(config_.channels));
    }
    return tokenize_windows(values, config_.window, config_.stride, ad::param(mut(tok_weight_)),
                            ad::param(mut(tok_bias_)));
  }

  /// y^(i): the CLS position after the transformer stack (1 x d_encoder).
  ad::Var operator()(const ad::Var& values, const nn::Pass& pass) const {
    const ad::Var u = tokens(values);
    const ad::Var positioned = ad::add(u, ad::constant(positional_table(u.rows(), config_.d_encoder)));
    return encode_tokens(positioned, pass);
  }

  /// Prepend CLS, run the layers, return the CLS row.
  ad::Var encode_tokens(const ad::Var& tokens, const nn::Pass& pass) const {
    if (tokens.rows() == 0) throw std::invalid_argument("encode_modality: empty token sequence");
    ad::Var h = ad::concat_rows({ad::param(mut(cls_)), tokens});
    for (const auto& block : blocks_) h = block(h, pass);
    return ad::slice_rows(h, 0, 1);
  }

  const ModalityEncoderConfig& config() const { return config_; }

  void parameters(std::vector<Parameter*>& out) {
    out.push_back(&tok_weight_);
    out.push_back(&tok_bias_);
    out.push_back(&cls_);
    for (auto& b : blocks_) b.parameters(out);
  }

 private:
  static Parameter& mut(const Parameter& p) { return const_cast<Parameter&>(p); }

  ModalityEncoderConfig config_;
  Parameter tok_weight_;
  Parameter tok_bias_;
  Parameter cls_;
  std::vector<nn::PostNormBlock> blocks_;
};

struct SensorEmbedding {
  std::string clip_id;
  Array vector;  // 1 x d_output
  std::map<Modality, Array> intermediates;
};

class SensorEncoder {
 public:
  SensorEncoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng = Rng(seed).substream("encoder.init");
    for (const auto& [m, c] : config_.modalities) {
      encoders_.emplace(m, ModalityEncoder("encoder." + std::string(ingest::to_string(m)), c, rng));
    }
    fusion_ = nn::Linear("encoder.fusion", config_.modalities.size() * config_.d_encoder(), config_.d_output, rng);
  }

  const EncoderConfig& config() const { return config_; }

  /// Fused embedding graph (1 x d_output). `intermediates`, when given,
  /// receives each modality's CLS vector.
  ad::Var forward(const EncoderInput& input, const nn::Pass& pass,
                  std::map<Modality, ad::Var>* intermediates = nullptr) const {
    std::vector<ad::Var> ys;
    ys.reserve(encoders_.size());
    for (const auto& [m, enc] : encoders_) {
      const auto it = input.find(m);
      if (it == input.end()) throw InputError("encoder input lacks modality " + std::string(ingest::to_string(m)));
      ys.push_back(enc(ad::constant(it->second), pass));
      if (intermediates) intermediates->emplace(m, ys.back());
    }
    return fuse_modalities(ys, fusion_);
  }

  /// Eval-mode embedding of one clip.
  SensorEmbedding embed(const ingest::ClipRecord& clip) const { return embed(clip.clip_id, encoder_input(clip)); }

  SensorEmbedding embed(const std::string& clip_id, const EncoderInput& input) const {
    std::map<Modality, ad::Var> inter;
    const ad::Var y = forward(input, nn::Pass{}, &inter);
    SensorEmbedding out{clip_id, y.value(), {}};
    if (!out.vector.all_finite()) throw DivergenceError("encoder produced a non-finite embedding for " + clip_id);
    for (const auto& [m, v] : inter) out.intermediates.emplace(m, v.value());
    return out;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& [m, enc] : encoders_) enc.parameters(out);
    fusion_.parameters(out);
    return out;
  }

  std::vector<const Parameter*> parameters() const { return nn::as_const(const_cast<SensorEncoder*>(this)->parameters()); }

  void freeze() { nn::set_trainable(parameters(), false); }

  nlohmann::ordered_json architecture() const { return config_.to_json(); }

  ModelCheckpoint to_checkpoint(std::uint64_t seed, std::string stage = "encoder") {
    return make_checkpoint(parameters(), architecture(), "encoder", std::move(stage), seed);
  }

  static SensorEncoder from_checkpoint(const ModelCheckpoint& c) {
    if (c.manifest.value("kind", "") != "encoder") throw ConfigError("checkpoint is not a sensor encoder");
    SensorEncoder enc(EncoderConfig::from_json(c.manifest.at("architecture")), 0);
    restore_parameters(c, enc.parameters());
    return enc;
  }

 private:
  EncoderConfig config_;
  std::map<Modality, ModalityEncoder> encoders_;
  nn::Linear fusion_;
};

}  // namespace s2t::encoder
