#pragma once

// Training procedures for the language side:
//   pretrain_lm         - next-token training of the decoder on text;
//   train_stage1        - Q-former on (sensor, caption) pairs, decoder frozen;
//   instruct_tune_stage2 - Q-former on (teacher embedding, question, answer).
// Sensor clips reach the Q-former as n per-segment embeddings from the
// frozen encoder (temporal tokens); noise is added to the bridge tokens
// during training only.

#include <algorithm>
#include <string>
#include <vector>

#include "s2t/bridge/decoder.hpp"
#include "s2t/bridge/prompt.hpp"
#include "s2t/bridge/qformer.hpp"
#include "s2t/encoder/encoder.hpp"
#include "s2t/training.hpp"

namespace s2t::bridge {

// ---------------------------------------------------------------- temporal segments

/// Embeddings of n contiguous, equal-length segments of a clip. Each segment
/// is cut into encoder-sized windows (window_samples, no overlap) whose
/// fused embeddings are averaged.
inline std::vector<Array> segment_embeddings(const encoder::SensorEncoder& enc, const encoder::EncoderInput& clip,
                                             std::size_t n_segments, std::size_t window_samples) {
  if (n_segments == 0) throw ConfigError("temporal segments must be at least 1");
  if (window_samples == 0) throw ConfigError("encoder window must be positive");
  if (clip.empty()) throw InputError("segment_embeddings: clip has no streams");
  const std::size_t total = clip.begin()->second.rows();
  for (const auto& [m, a] : clip) {
    if (a.rows() != total) throw InputError("segment_embeddings: streams of one clip differ in length");
  }
  std::vector<Array> out;
  for (std::size_t s = 0; s < n_segments; ++s) {
    const std::size_t begin = s * total / n_segments;
    const std::size_t end = (s + 1) * total / n_segments;
    const std::size_t windows = (end - begin) / window_samples;
    if (windows == 0) {
      throw InputError("segment of " + std::to_string(end - begin) + " samples is shorter than the encoder window of " +
                       std::to_string(window_samples));
    }
    Array mean = Array::matrix(1, enc.config().d_output);
    for (std::size_t w = 0; w < windows; ++w) {
      encoder::EncoderInput window;
      for (const auto& [m, a] : clip) {
        const std::size_t row0 = begin + w * window_samples;
        const auto src = a.data().subspan(row0 * a.cols(), window_samples * a.cols());
        window.emplace(m, Array({window_samples, a.cols()}, std::vector<double>(src.begin(), src.end())));
      }
      const Array y = enc.embed("", window).vector;
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += y[k] / static_cast<double>(windows);
    }
    out.push_back(std::move(mean));
  }
  return out;
}

// ---------------------------------------------------------------- bridge samples

struct BridgeSample {
  std::string item_id;
  std::vector<Array> segments;  // each 1 x d_input, in time order
  std::string user_text;        // question for the instruct template
  std::string target;           // caption or answer
};

struct BridgeSettings {
  TrainSettings train;
  std::string template_id = "stage1";
  double noise_variance = 1e-4;
  std::size_t max_len = 32;
};

/// Bridge tokens for a sample: temporal Q-former outputs, optionally noised.
inline ad::Var bridge_tokens(const QFormer& qf, const BridgeSample& s, double noise_variance, Rng* rng) {
  std::vector<ad::Var> segs;
  segs.reserve(s.segments.size());
  for (const auto& a : s.segments) segs.push_back(ad::constant(a));
  const ad::Var tokens = assemble_temporal(segs, qf);
  if (rng && noise_variance > 0.0) return inject_noise(tokens, noise_variance, *rng);
  return tokens;
}

inline TokenSequence sample_prompt(const QFormer& qf, const ToyDecoder& dec, const PromptTemplates& templates,
                                   const std::string& template_id, const BridgeSample& s, double noise_variance,
                                   Rng* rng) {
  return build_prompt(templates, template_id, bridge_tokens(qf, s, noise_variance, rng), s.user_text, dec.vocab());
}

/// Eval-mode generation for one sample (no noise).
inline std::string generate(const QFormer& qf, const ToyDecoder& dec, const PromptTemplates& templates,
                            const std::string& template_id, const BridgeSample& s, std::size_t max_len) {
  return greedy_decode(dec, sample_prompt(qf, dec, templates, template_id, s, 0.0, nullptr), max_len);
}

/// Mean per-sample generation loss in eval mode.
inline double mean_bridge_loss(const QFormer& qf, const ToyDecoder& dec, const PromptTemplates& templates,
                               const std::string& template_id, const std::vector<BridgeSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const TokenSequence p = sample_prompt(qf, dec, templates, template_id, s, 0.0, nullptr);
    total += generation_loss(dec, p, target_ids(dec.vocab(), s.target)).value()[0];
  }
  return total / static_cast<double>(samples.size());
}

/// Train the Q-former on `train` with the decoder frozen.
inline TrainingLog train_bridge(QFormer& qf, const ToyDecoder& dec, const PromptTemplates& templates,
                                const std::vector<BridgeSample>& train, const std::vector<BridgeSample>& validation,
                                const BridgeSettings& settings, std::uint64_t seed, const std::string& stage) {
  settings.train.validate(stage);
  if (!dec.frozen()) throw std::logic_error(stage + ": the decoder must be frozen");
  if (train.empty()) throw InputError(stage + ": no training samples");
  const std::vector<Parameter*> params = qf.parameters();
  Rng shuffle_rng = Rng(seed).substream(stage + ".shuffle");
  Rng noise_rng = Rng(seed).substream(stage + ".noise");

  // Targets are checked up front so an out-of-vocabulary caption fails fast.
  std::vector<std::vector<std::size_t>> targets;
  for (const auto& s : train) targets.push_back(target_ids(dec.vocab(), s.target));

  TrainingLog log;
  log.stage = stage;
  log.initial_train_loss = mean_bridge_loss(qf, dec, templates, settings.template_id, train);
  require_finite_loss(log.initial_train_loss, stage);
  if (!validation.empty()) log.initial_val_loss = mean_bridge_loss(qf, dec, templates, settings.template_id, validation);

  EarlyStopping stopper(settings.train.patience, settings.train.min_delta);
  if (log.initial_val_loss) stopper.improved(*log.initial_val_loss);
  std::vector<Array> best = snapshot(params);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 1; epoch <= settings.train.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += settings.train.batch_size) {
      const std::size_t end = std::min(order.size(), start + settings.train.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const BridgeSample& s = train[order[k]];
        const TokenSequence p =
            sample_prompt(qf, dec, templates, settings.template_id, s, settings.noise_variance, &noise_rng);
        const ad::Var loss = generation_loss(dec, p, targets[order[k]]);
        const double v = loss.value()[0];
        require_finite_loss(v, stage);
        epoch_loss += v;
        ad::backward(loss);
      }
      apply_adam(params, settings.train, stage);
    }
    EpochLog row{epoch, epoch_loss / static_cast<double>(train.size()), std::nullopt};
    if (!validation.empty()) {
      row.val_loss = mean_bridge_loss(qf, dec, templates, settings.template_id, validation);
      require_finite_loss(*row.val_loss, stage);
      if (stopper.improved(*row.val_loss)) best = snapshot(params);
    }
    log.epochs.push_back(row);
    if (!validation.empty() && stopper.should_stop()) {
      log.stopped_early = true;
      break;
    }
  }
  if (!validation.empty()) restore(params, best);
  return log;
}

inline TrainingLog train_stage1(QFormer& qf, const ToyDecoder& dec, const PromptTemplates& templates,
                                const std::vector<BridgeSample>& train, const std::vector<BridgeSample>& validation,
                                BridgeSettings settings, std::uint64_t seed) {
  settings.template_id = "stage1";
  return train_bridge(qf, dec, templates, train, validation, settings, seed, "stage1");
}

inline TrainingLog instruct_tune_stage2(QFormer& qf, const ToyDecoder& dec, const PromptTemplates& templates,
                                        const std::vector<BridgeSample>& train, BridgeSettings settings,
                                        std::uint64_t seed) {
  settings.template_id = "instruct";
  for (const auto& s : train) {
    if (s.user_text.empty()) throw InputError("instruct sample " + s.item_id + " has no question");
  }
  return train_bridge(qf, dec, templates, train, {}, settings, seed, "stage2");
}

// ---------------------------------------------------------------- language-model pretraining

struct LmExample {
  TokenSequence prompt;
  std::vector<std::size_t> targets;
};

/// Plain sentence: predict every word after BOS, then EOS.
inline LmExample sentence_example(const Vocabulary& vocab, const std::string& text) {
  LmExample ex;
  ex.prompt.items.push_back({false, Vocabulary::kBos});
  ex.targets = target_ids(vocab, text);
  return ex;
}

/// Templated example whose slot positions carry the target's own words,
/// spread evenly over `slot_count` positions: the decoder learns to
/// describe whatever occupies the slots.
inline LmExample slotted_text_example(const PromptTemplates& templates, const std::string& template_id,
                                      std::size_t slot_count, const std::string& user_text, const std::string& target,
                                      const Vocabulary& vocab) {
  const auto words = vocab.encode(target);
  if (words.empty()) throw InputError("empty pretraining target");
  std::vector<double> placeholder(slot_count, 0.0);
  TokenSequence layout = build_prompt(templates, template_id, ad::constant(Array({slot_count, 1}, placeholder)),
                                      user_text, vocab);
  LmExample ex;
  for (const auto& item : layout.items) {
    if (item.is_slot) {
      ex.prompt.items.push_back({false, words[item.index * words.size() / slot_count]});
    } else {
      ex.prompt.items.push_back(item);
    }
  }
  ex.targets = target_ids(vocab, target);
  return ex;
}

inline double mean_lm_loss(const ToyDecoder& dec, const std::vector<LmExample>& corpus) {
  double total = 0.0;
  for (const auto& ex : corpus) total += generation_loss(dec, ex.prompt, ex.targets).value()[0];
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

/// Next-token training of every decoder parameter.
inline TrainingLog pretrain_lm(ToyDecoder& dec, const std::vector<LmExample>& corpus, const TrainSettings& settings,
                               std::uint64_t seed) {
  settings.validate("pretrain_lm");
  if (corpus.empty()) throw InputError("pretrain_lm: empty corpus");
  const std::vector<Parameter*> params = dec.parameters();
  nn::set_trainable(params, true);
  Rng shuffle_rng = Rng(seed).substream("pretrain.shuffle");
  TrainingLog log;
  log.stage = "pretrain-lm";
  log.initial_train_loss = mean_lm_loss(dec, corpus);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t end = std::min(order.size(), start + settings.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const LmExample& ex = corpus[order[k]];
        const ad::Var loss = generation_loss(dec, ex.prompt, ex.targets);
        const double v = loss.value()[0];
        require_finite_loss(v, "pretrain_lm");
        epoch_loss += v;
        ad::backward(loss);
      }
      apply_adam(params, settings, "pretrain_lm");
    }
    log.epochs.push_back({epoch, epoch_loss / static_cast<double>(corpus.size()), std::nullopt});
  }
  return log;
}

}  // namespace s2t::bridge
