#pragma once

// Teacher alignment: minimise sum_i ||Encoder(x_i) - Teacher(x_i)||^2 plus an
// optional L2 penalty, with Adam, shuffled mini-batches, and early stopping
// on validation loss. Logged losses are per-sample means.

#include <string>
#include <vector>

#include "s2t/encoder/encoder.hpp"
#include "s2t/encoder/teacher.hpp"
#include "s2t/training.hpp"

namespace s2t::encoder {

/// Sum of squared distances between predictions and targets, plus
/// reg_weight * sum of squared trainable weights.
inline ad::Var alignment_loss(const std::vector<ad::Var>& predictions, const std::vector<Array>& targets,
                              double reg_weight = 0.0, const std::vector<Parameter*>& weights = {}) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("alignment_loss: batch sizes differ");
  if (predictions.empty()) throw std::invalid_argument("alignment_loss: empty batch");
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].value().size() != targets[i].size()) {
      throw std::invalid_argument("alignment_loss: prediction length " + std::to_string(predictions[i].value().size()) +
                                  " does not match teacher length " + std::to_string(targets[i].size()));
    }
    const Array t({predictions[i].rows(), predictions[i].cols()}, targets[i].vec());
    terms.push_back(ad::sum_squares(ad::sub(predictions[i], ad::constant(t))));
  }
  if (reg_weight > 0.0) {
    for (Parameter* p : weights) {
      if (p->trainable) terms.push_back(ad::scale(ad::sum_squares(ad::param(*p)), reg_weight));
    }
  }
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

struct AlignmentSample {
  std::string clip_id;
  EncoderInput input;
  Array target;
};

/// Pair every clip with its teacher vector; a clip without one is an error.
inline std::vector<AlignmentSample> alignment_samples(const std::vector<ingest::ClipRecord>& clips,
                                                      const TeacherProvider& teacher) {
  std::vector<AlignmentSample> out;
  out.reserve(clips.size());
  for (const auto& c : clips) {
    if (!c.teacher_key) throw InputError("clip " + c.clip_id + " has no teacher key");
    auto target = teacher.lookup(*c.teacher_key);
    if (!target) throw InputError("no teacher embedding for clip " + c.clip_id + " (key '" + *c.teacher_key + "')");
    out.push_back({c.clip_id, encoder_input(c), *std::move(target)});
  }
  return out;
}

/// Mean per-sample squared distance in eval mode.
inline double mean_alignment_loss(const SensorEncoder& enc, const std::vector<AlignmentSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const ad::Var y = enc.forward(s.input, nn::Pass{});
    total += alignment_loss({y}, {s.target}).value()[0];
  }
  return total / static_cast<double>(samples.size());
}

struct EncoderTrainResult {
  SensorEncoder encoder;
  TrainingLog log;
};

/// Train a fresh encoder. When validation samples exist the weights of the
/// best validation epoch are kept.
inline EncoderTrainResult train_encoder(const std::vector<AlignmentSample>& train,
                                        const std::vector<AlignmentSample>& validation, const EncoderConfig& config,
                                        const TrainSettings& settings, std::uint64_t seed) {
  settings.validate("train_encoder");
  if (train.empty()) throw InputError("train_encoder: no training clips");
  if (config.teacher_dim != train.front().target.size()) {
    throw ConfigError("train_encoder: teacher dim " + std::to_string(train.front().target.size()) +
                      " does not match encoder output " + std::to_string(config.d_output));
  }
  SensorEncoder enc(config, seed);
  const std::vector<Parameter*> params = enc.parameters();
  Rng shuffle_rng = Rng(seed).substream("encoder.shuffle");
  Rng dropout_rng = Rng(seed).substream("encoder.dropout");
  const nn::Pass pass{true, &dropout_rng};

  TrainingLog log;
  log.stage = "encoder";
  log.initial_train_loss = mean_alignment_loss(enc, train);
  require_finite_loss(log.initial_train_loss, "train_encoder");
  if (!validation.empty()) log.initial_val_loss = mean_alignment_loss(enc, validation);

  EarlyStopping stopper(settings.patience, settings.min_delta);
  if (log.initial_val_loss) stopper.improved(*log.initial_val_loss);
  std::vector<Array> best = snapshot(params);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t end = std::min(order.size(), start + settings.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        const ad::Var loss = alignment_loss({enc.forward(s.input, pass)}, {s.target});
        const double v = loss.value()[0];
        require_finite_loss(v, "train_encoder");
        epoch_loss += v;
        ad::backward(loss);
      }
      if (settings.reg_weight > 0.0) {
        ad::Var reg;
        for (Parameter* p : params) {
          const ad::Var term = ad::scale(ad::sum_squares(ad::param(*p)), settings.reg_weight);
          reg = reg.valid() ? ad::add(reg, term) : term;
        }
        ad::backward(reg);
      }
      apply_adam(params, settings, "train_encoder");
    }
    EpochLog row{epoch, epoch_loss / static_cast<double>(train.size()), std::nullopt};
    if (!validation.empty()) {
      row.val_loss = mean_alignment_loss(enc, validation);
      require_finite_loss(*row.val_loss, "train_encoder");
      if (stopper.improved(*row.val_loss)) best = snapshot(params);
    }
    log.epochs.push_back(row);
    if (!validation.empty() && stopper.should_stop()) {
      log.stopped_early = true;
      break;
    }
  }
  if (!validation.empty()) restore(params, best);
  return {std::move(enc), std::move(log)};
}

}  // namespace s2t::encoder
