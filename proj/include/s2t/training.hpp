#pragma once

// Optimizer settings and per-epoch logs shared by every training stage.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/error.hpp"
#include "s2t/numerics/parameter.hpp"

namespace s2t {

struct TrainSettings {
  double lr = 2e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::size_t patience = 10;  // epochs without validation improvement; 0 disables
  double min_delta = 1e-4;
  double reg_weight = 0.0;  // L2 weight decay added to the loss

  void validate(const std::string& where) const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(where + ": lr must be positive");
    if (batch_size == 0) throw ConfigError(where + ": batch_size must be positive");
    if (!(min_delta >= 0.0)) throw ConfigError(where + ": min_delta must be non-negative");
    if (!(reg_weight >= 0.0)) throw ConfigError(where + ": reg_weight must be non-negative");
  }

  AdamSettings adam() const { return AdamSettings{.lr = lr}; }

  nlohmann::ordered_json to_json() const {
    return {{"lr", lr},           {"batch_size", batch_size}, {"epochs", epochs},
            {"patience", patience}, {"min_delta", min_delta},   {"reg_weight", reg_weight}};
  }

  /// Read fields present in `j`, keeping `base` values for the rest.
  static TrainSettings from_json(const nlohmann::json& j) { return from_json(j, TrainSettings{}); }
  static TrainSettings from_json(const nlohmann::json& j, TrainSettings base) {
    base.lr = j.value("lr", base.lr);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.epochs = j.value("epochs", base.epochs);
    base.patience = j.value("patience", base.patience);
    base.min_delta = j.value("min_delta", base.min_delta);
    base.reg_weight = j.value("reg_weight", base.reg_weight);
    return base;
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per sample
  std::optional<double> val_loss;
};

struct TrainingLog {
  std::string stage;
  double initial_train_loss = 0.0;
  std::optional<double> initial_val_loss;
  std::vector<EpochLog> epochs;
  bool stopped_early = false;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["initial_train_loss"] = initial_train_loss;
    j["initial_val_loss"] = initial_val_loss ? nlohmann::ordered_json(*initial_val_loss) : nullptr;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
      rows.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss ? nlohmann::ordered_json(*e.val_loss) : nullptr}});
    }
    j["epochs"] = rows;
    j["stopped_early"] = stopped_early;
    return j;
  }
};

/// Tracks the best validation loss and signals when patience runs out.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  /// Returns true when `loss` is a new best (by at least min_delta).
  bool improved(double loss) {
    if (loss < best_ - min_delta_) {
      best_ = loss;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }
  bool should_stop() const { return patience_ > 0 && stale_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

inline void require_finite_loss(double loss, const std::string& stage) {
  if (!std::isfinite(loss)) throw DivergenceError(stage + ": loss became non-finite");
}

/// Snapshot of parameter values, used to restore the best epoch.
inline std::vector<Array> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Array> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

inline void restore(const std::vector<Parameter*>& params, const std::vector<Array>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

/// One optimizer step over every trainable parameter, after checking gradients.
inline void apply_adam(const std::vector<Parameter*>& params, const TrainSettings& settings, const std::string& stage) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (!p->gradient.all_finite()) throw DivergenceError(stage + ": non-finite gradient for " + p->name);
    adam_step(*p, settings.adam());
  }
}

}  // namespace s2t
