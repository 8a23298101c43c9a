#pragma once

// Small causal language decoder: word embeddings (scaled by sqrt(d_model))
// plus sinusoidal positions, pre-norm causal transformer layers, a final
// layer norm and an output head tied to the embedding table. Inputs are
// TokenSequences, so sensor embeddings can occupy positions directly.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/bridge/prompt.hpp"
#include "s2t/bridge/text.hpp"
#include "s2t/checkpoint.hpp"
#include "s2t/encoder/encoder.hpp"
#include "s2t/numerics/layers.hpp"

namespace s2t::bridge {

struct DecoderConfig {
  std::size_t d_model = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t head_dim = 32;
  std::size_t ffn_hidden = 512;
  std::size_t max_positions = 512;

  void validate() const {
    if (d_model == 0 || layers == 0 || heads == 0 || head_dim == 0 || ffn_hidden == 0 || max_positions == 0) {
      throw ConfigError("decoder: every size must be positive");
    }
    if (heads * head_dim != d_model) throw ConfigError("decoder: heads * head_dim must equal d_model");
    if (d_model % 2 != 0) throw ConfigError("decoder: d_model must be even");
  }

  nlohmann::ordered_json to_json() const {
    return {{"d_model", d_model},   {"layers", layers},       {"heads", heads},
            {"head_dim", head_dim}, {"ffn_hidden", ffn_hidden}, {"max_positions", max_positions}};
  }

  static DecoderConfig from_json(const nlohmann::json& j) { return from_json(j, DecoderConfig{}); }
  static DecoderConfig from_json(const nlohmann::json& j, DecoderConfig c) {
    c.d_model = j.value("d_model", c.d_model);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.max_positions = j.value("max_positions", c.max_positions);
    return c;
  }
};

class ToyDecoder {
 public:
  ToyDecoder(const DecoderConfig& config, Vocabulary vocab, std::uint64_t seed)
      : config_(config), vocab_(std::move(vocab)) {
    config_.validate();
    Rng rng = Rng(seed).substream("decoder.init");
    embedding_ = Parameter("decoder.embedding", glorot_uniform(rng, vocab_.size(), config_.d_model));
    const nn::BlockShape shape{config_.d_model, config_.heads, config_.head_dim, config_.ffn_hidden, 0.0};
    for (std::size_t i = 0; i < config_.layers; ++i) blocks_.emplace_back("decoder.layer" + std::to_string(i), shape, rng);
    final_norm_ = nn::LayerNorm("decoder.final_norm", config_.d_model);
    positions_ = encoder::positional_table(config_.max_positions, config_.d_model);
  }

  const DecoderConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

  /// Input embeddings for a sequence: scaled token rows or slot rows, plus positions.
  ad::Var embed(const TokenSequence& seq) const {
    if (seq.items.empty()) throw std::invalid_argument("decoder: empty sequence");
    if (seq.items.size() > config_.max_positions) {
      throw std::invalid_argument("decoder: sequence of " + std::to_string(seq.items.size()) +
                                  " positions exceeds max_positions " + std::to_string(config_.max_positions));
    }
    if (seq.slot_count() > 0 && (!seq.slots.valid() || seq.slots.cols() != config_.d_model)) {
      throw std::invalid_argument("decoder: sensor slots must have width d_model");
    }
    const ad::Var table = ad::param(const_cast<Parameter&>(embedding_));
    const double scale = std::sqrt(static_cast<double>(config_.d_model));
    std::vector<ad::Var> runs;
    std::size_t i = 0;
    while (i < seq.items.size()) {
      std::size_t j = i;
      if (seq.items[i].is_slot) {
        while (j < seq.items.size() && seq.items[j].is_slot && seq.items[j].index == seq.items[i].index + (j - i)) ++j;
        runs.push_back(ad::slice_rows(seq.slots, seq.items[i].index, j - i));
      } else {
        std::vector<std::size_t> ids;
        while (j < seq.items.size() && !seq.items[j].is_slot) {
          if (seq.items[j].index >= vocab_.size()) throw std::invalid_argument("decoder: token id outside vocabulary");
          ids.push_back(seq.items[j].index);
          ++j;
        }
        runs.push_back(ad::scale(ad::gather_rows(table, ids), scale));
      }
      i = j;
    }
    const ad::Var x = runs.size() == 1 ? runs.front() : ad::concat_rows(runs);
    return ad::add(x, ad::constant(position_rows(seq.items.size())));
  }

  /// Final hidden states (rows x d_model) for input embeddings.
  ad::Var hidden(const ad::Var& x) const {
    ad::Var h = x;
    for (const auto& b : blocks_) h = b(h);
    return final_norm_(h);
  }

  /// Vocabulary logits through the tied head.
  ad::Var logits(const ad::Var& h) const { return ad::matmul_nt(h, ad::param(const_cast<Parameter&>(embedding_))); }

  ad::Var forward(const TokenSequence& seq) const { return logits(hidden(embed(seq))); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding_};
    for (auto& b : blocks_) b.parameters(out);
    final_norm_.parameters(out);
    return out;
  }
  std::vector<const Parameter*> parameters() const { return nn::as_const(const_cast<ToyDecoder*>(this)->parameters()); }

  void freeze() { nn::set_trainable(parameters(), false); }
  bool frozen() const {
    for (const Parameter* p : parameters())
      if (p->trainable) return false;
    return true;
  }

  nlohmann::ordered_json architecture() const {
    auto j = config_.to_json();
    j["vocab_size"] = vocab_.size();
    return j;
  }

  ModelCheckpoint to_checkpoint(std::uint64_t seed, std::string stage = "pretrain-lm") {
    ModelCheckpoint c = make_checkpoint(parameters(), architecture(), "decoder", std::move(stage), seed);
    c.manifest["vocabulary"] = vocab_.to_json();
    return c;
  }

  static ToyDecoder from_checkpoint(const ModelCheckpoint& c, const DecoderConfig* expected = nullptr) {
    if (c.manifest.value("kind", "") != "decoder") throw ConfigError("checkpoint is not a decoder");
    if (!c.manifest.contains("vocabulary")) throw CorruptionError("decoder checkpoint lacks a vocabulary");
    Vocabulary vocab = Vocabulary::from_json(c.manifest["vocabulary"]);
    if (expected) {
      auto arch = expected->to_json();
      arch["vocab_size"] = vocab.size();
      require_architecture(c, arch);
    }
    ToyDecoder d(DecoderConfig::from_json(c.manifest.at("architecture")), std::move(vocab), 0);
    restore_parameters(c, d.parameters());
    return d;
  }

 private:
  Array position_rows(std::size_t count) const {
    const auto data = positions_.data().subspan(0, count * config_.d_model);
    return Array({count, config_.d_model}, std::vector<double>(data.begin(), data.end()));
  }

  DecoderConfig config_;
  Vocabulary vocab_;
  Parameter embedding_;
  std::vector<nn::PreNormCausalBlock> blocks_;
  nn::LayerNorm final_norm_;
  Array positions_;
};

/// Teacher-forced -sum log p(target_i | prompt, target_<i) in one causal pass.
inline ad::Var generation_loss(const ToyDecoder& dec, const TokenSequence& prompt,
                               const std::vector<std::size_t>& targets) {
  if (targets.empty()) throw std::invalid_argument("generation_loss: empty target");
  if (prompt.items.empty()) throw std::invalid_argument("generation_loss: empty prompt");
  for (std::size_t t : targets) {
    if (t >= dec.vocab().size()) throw InputError("generation_loss: target id " + std::to_string(t) + " out of vocabulary");
  }
  TokenSequence input = prompt;
  for (std::size_t i = 0; i + 1 < targets.size(); ++i) input.items.push_back({false, targets[i]});
  const ad::Var h = dec.hidden(dec.embed(input));
  const ad::Var rows = ad::slice_rows(h, prompt.items.size() - 1, targets.size());
  return ad::cross_entropy(dec.logits(rows), targets);
}

/// Token ids for a caption followed by EOS.
inline std::vector<std::size_t> target_ids(const Vocabulary& vocab, const std::string& text) {
  auto ids = vocab.encode(text);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

/// Greedy decoding: argmax each step (lowest id wins ties) until EOS or max_len tokens.
inline std::vector<std::size_t> greedy_ids(const ToyDecoder& dec, const TokenSequence& prompt, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  TokenSequence seq = prompt;
  std::vector<std::size_t> out;
  while (out.size() < max_len && seq.items.size() < dec.config().max_positions) {
    const ad::Var h = dec.hidden(dec.embed(seq));
    const Array logits = dec.logits(ad::slice_rows(h, h.rows() - 1, 1)).value();
    std::size_t best = 0;
    for (std::size_t v = 1; v < logits.size(); ++v)
      if (logits[v] > logits[best]) best = v;
    out.push_back(best);
    if (best == Vocabulary::kEos) break;
    seq.items.push_back({false, best});
  }
  return out;
}

inline std::string greedy_decode(const ToyDecoder& dec, const TokenSequence& prompt, std::size_t max_len) {
  return dec.vocab().decode(greedy_ids(dec, prompt, max_len));
}

}  // namespace s2t::bridge
