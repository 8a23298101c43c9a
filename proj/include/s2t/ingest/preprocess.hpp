#pragma once

// Per-modality preprocessing. Eye gaze is clamped to [0.05, 0.95], gaps are
// interpolated and the result mapped to [-1, 1]. EMG is low-passed at 5 Hz
// (4th-order Butterworth, forward-backward) and scaled per channel by the
// training partition's max |value|. Body joint angles in degrees are divided
// by 180. IMU triplets are magnitude-normalized and get an elevation channel.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/error.hpp"
#include "s2t/ingest/filter.hpp"
#include "s2t/ingest/stream.hpp"

namespace s2t::ingest {

enum class EyeOutlierMode { clamp, remove };

struct PreprocessOptions {
  EyeOutlierMode eye_outliers = EyeOutlierMode::clamp;
  double eye_low = 0.05;
  double eye_high = 0.95;
  double emg_cutoff_hz = 5.0;
  int emg_order = 4;
  double body_range_deg = 180.0;
};

/// Normalization scales fitted on the training partition: per modality, a
/// map from channel name to the divisor applied to that channel.
struct PreprocessStats {
  std::map<std::string, std::map<std::string, double>> scales;

  double scale(Modality m, const std::string& channel) const {
    const auto mod = scales.find(std::string(to_string(m)));
    if (mod == scales.end()) throw InputError("no preprocessing stats for modality " + std::string(to_string(m)));
    const auto it = mod->second.find(channel);
    if (it == mod->second.end()) {
      throw InputError("no preprocessing stats for " + std::string(to_string(m)) + " channel " + channel);
    }
    return it->second;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [mod, channels] : scales) {
      nlohmann::ordered_json c = nlohmann::ordered_json::object();
      for (const auto& [name, value] : channels) c[name] = value;
      j[mod] = c;
    }
    return j;
  }

  static PreprocessStats from_json(const nlohmann::json& j) {
    PreprocessStats s;
    for (const auto& [mod, channels] : j.items()) {
      for (const auto& [name, value] : channels.items()) s.scales[mod][name] = value.get<double>();
    }
    return s;
  }
};

inline constexpr double kDegenerateMagnitude = 1e-9;

namespace detail {

/// Fill NaNs in one channel by linear interpolation, holding edge values.
inline void interpolate_channel(SensorStream& s, std::size_t ch) {
  const std::size_t n = s.samples();
  std::size_t prev = n;  // index of the last valid sample seen
  for (std::size_t r = 0; r < n; ++r) {
    if (std::isnan(s.at(r, ch))) continue;
    if (prev == n) {
      for (std::size_t k = 0; k < r; ++k) s.at(k, ch) = s.at(r, ch);
    } else if (r > prev + 1) {
      const double a = s.at(prev, ch);
      const double b = s.at(r, ch);
      const double t0 = s.timestamps[prev];
      const double span = s.timestamps[r] - t0;
      for (std::size_t k = prev + 1; k < r; ++k) s.at(k, ch) = a + (b - a) * (s.timestamps[k] - t0) / span;
    }
    prev = r;
  }
  if (prev == n) {
    throw InputError("stream " + s.clip_id + " (" + std::string(to_string(s.modality)) + "): channel " +
                     std::to_string(ch) + " has no valid samples");
  }
  for (std::size_t k = prev + 1; k < n; ++k) s.at(k, ch) = s.at(prev, ch);
}

inline void interpolate_all(SensorStream& s) {
  for (std::size_t c = 0; c < s.channels; ++c) interpolate_channel(s, c);
}

inline void clamp_unit(SensorStream& s) {
  for (double& v : s.values) v = std::clamp(v, -1.0, 1.0);
}

inline void require_uniform(const SensorStream& s) {
  if (s.preprocessed) throw std::logic_error("stream " + s.clip_id + " is already preprocessed");
  if (!s.rate_hz) throw InputError("stream " + s.clip_id + " is irregular; resample before preprocessing");
}

inline std::vector<double> channel_values(const SensorStream& s, std::size_t ch) {
  std::vector<double> out(s.samples());
  for (std::size_t r = 0; r < s.samples(); ++r) out[r] = s.at(r, ch);
  return out;
}

}  // namespace detail

inline SensorStream preprocess_eye(SensorStream s, const PreprocessOptions& opt = {}) {
  detail::require_uniform(s);
  for (double& v : s.values) {
    if (std::isnan(v)) continue;
    if (opt.eye_outliers == EyeOutlierMode::remove && (v < opt.eye_low || v > opt.eye_high)) {
      v = kMissing;
    } else {
      v = std::clamp(v, opt.eye_low, opt.eye_high);
    }
  }
  detail::interpolate_all(s);
  for (double& v : s.values) v = (v - opt.eye_low) / (opt.eye_high - opt.eye_low) * 2.0 - 1.0;
  detail::clamp_unit(s);
  s.preprocessed = true;
  return s;
}

/// Low-pass an EMG stream (gaps interpolated first), without scaling.
inline SensorStream lowpass_emg(SensorStream s, const PreprocessOptions& opt = {}) {
  detail::require_uniform(s);
  detail::interpolate_all(s);
  const auto sos = butterworth_lowpass(opt.emg_order, opt.emg_cutoff_hz, *s.rate_hz);
  for (std::size_t c = 0; c < s.channels; ++c) {
    const auto filtered = filtfilt(sos, detail::channel_values(s, c));
    for (std::size_t r = 0; r < s.samples(); ++r) s.at(r, c) = filtered[r];
  }
  return s;
}

inline SensorStream preprocess_emg(SensorStream s, const PreprocessStats& stats, const PreprocessOptions& opt = {}) {
  s = lowpass_emg(std::move(s), opt);
  for (std::size_t c = 0; c < s.channels; ++c) {
    const double scale = stats.scale(Modality::emg, std::to_string(c));
    for (std::size_t r = 0; r < s.samples(); ++r) s.at(r, c) /= scale;
  }
  detail::clamp_unit(s);
  s.preprocessed = true;
  return s;
}

inline SensorStream preprocess_body(SensorStream s, const PreprocessOptions& opt = {}) {
  detail::require_uniform(s);
  detail::interpolate_all(s);
  for (double& v : s.values) v /= opt.body_range_deg;
  detail::clamp_unit(s);
  s.preprocessed = true;
  return s;
}

/// Elevation of an (x, y, z) reading: arcsin(z / |v|), 0 for a degenerate row.
inline double elevation(double x, double y, double z) {
  const double mag = std::sqrt(x * x + y * y + z * z);
  if (mag < kDegenerateMagnitude) return 0.0;
  return std::asin(std::clamp(z / mag, -1.0, 1.0));
}

/// Scale (x, y, z) rows by 1/magnitude_scale and append the elevation channel.
inline SensorStream imu_features(SensorStream s, double magnitude_scale) {
  if (s.channels != 3) {
    throw InputError("imu_features: stream " + s.clip_id + " has " + std::to_string(s.channels) +
                     " channels, expected 3");
  }
  if (!(magnitude_scale > 0.0)) throw std::invalid_argument("imu_features: magnitude scale must be positive");
  detail::interpolate_all(s);
  std::vector<double> out;
  out.reserve(s.samples() * 4);
  for (std::size_t r = 0; r < s.samples(); ++r) {
    const double x = s.at(r, 0) / magnitude_scale;
    const double y = s.at(r, 1) / magnitude_scale;
    const double z = s.at(r, 2) / magnitude_scale;
    out.insert(out.end(), {x, y, z, elevation(x, y, z)});
  }
  s.values = std::move(out);
  s.channels = 4;
  return s;
}

inline SensorStream preprocess(SensorStream s, const PreprocessStats& stats, const PreprocessOptions& opt = {}) {
  switch (s.modality) {
    case Modality::eye: return preprocess_eye(std::move(s), opt);
    case Modality::emg: return preprocess_emg(std::move(s), stats, opt);
    case Modality::body: return preprocess_body(std::move(s), opt);
    case Modality::imu_accel:
    case Modality::imu_gyro:
    case Modality::imu_orient:
    case Modality::watch_accel: {
      detail::require_uniform(s);
      const double scale = stats.scale(s.modality, "magnitude");
      SensorStream out = imu_features(std::move(s), scale);
      out.preprocessed = true;
      return out;
    }
  }
  throw InputError("preprocess: unknown modality");
}

/// Fit normalization scales on training-partition streams (already resampled).
inline PreprocessStats fit_stats(const std::vector<SensorStream>& training, const PreprocessOptions& opt = {}) {
  PreprocessStats stats;
  std::map<std::string, double> imu_sum;
  std::map<std::string, std::size_t> imu_rows;
  for (const SensorStream& raw : training) {
    const std::string mod(to_string(raw.modality));
    if (raw.modality == Modality::emg) {
      const SensorStream f = lowpass_emg(raw, opt);
      for (std::size_t c = 0; c < f.channels; ++c) {
        double& slot = stats.scales[mod][std::to_string(c)];
        for (std::size_t r = 0; r < f.samples(); ++r) slot = std::max(slot, std::abs(f.at(r, c)));
      }
    } else if (is_imu(raw.modality)) {
      if (raw.channels != 3) throw InputError("IMU stream " + raw.clip_id + " must have 3 channels");
      for (std::size_t r = 0; r < raw.samples(); ++r) {
        const double x = raw.at(r, 0), y = raw.at(r, 1), z = raw.at(r, 2);
        if (std::isnan(x) || std::isnan(y) || std::isnan(z)) continue;
        imu_sum[mod] += std::sqrt(x * x + y * y + z * z);
        imu_rows[mod] += 1;
      }
    }
  }
  for (auto& [mod, channels] : stats.scales) {
    for (auto& [name, v] : channels) {
      if (v <= 0.0) v = 1.0;
    }
  }
  for (const auto& [mod, total] : imu_sum) {
    const double avg = total / static_cast<double>(imu_rows[mod]);
    stats.scales[mod]["magnitude"] = avg > 0.0 ? avg : 1.0;
  }
  return stats;
}

}  // namespace s2t::ingest
