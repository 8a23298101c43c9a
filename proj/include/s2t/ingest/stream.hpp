#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "s2t/error.hpp"

namespace s2t::ingest {

enum class Modality { eye, emg, body, imu_accel, imu_gyro, imu_orient, watch_accel };

inline constexpr Modality kAllModalities[] = {Modality::eye,       Modality::emg,      Modality::body,
                                              Modality::imu_accel, Modality::imu_gyro, Modality::imu_orient,
                                              Modality::watch_accel};

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::eye: return "eye";
    case Modality::emg: return "emg";
    case Modality::body: return "body";
    case Modality::imu_accel: return "imu_accel";
    case Modality::imu_gyro: return "imu_gyro";
    case Modality::imu_orient: return "imu_orient";
    case Modality::watch_accel: return "watch_accel";
  }
  return "unknown";
}

inline Modality parse_modality(std::string_view name) {
  for (Modality m : kAllModalities)
    if (to_string(m) == name) return m;
  // "muscle" is the name the activity tables use for EMG.
  if (name == "muscle") return Modality::emg;
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

inline bool is_imu(Modality m) {
  return m == Modality::imu_accel || m == Modality::imu_gyro || m == Modality::imu_orient ||
         m == Modality::watch_accel;
}

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Timestamped multi-channel series. Missing readings are NaN until
/// preprocessing removes them.
struct SensorStream {
  std::string clip_id;
  Modality modality = Modality::eye;
  std::vector<double> timestamps;
  std::vector<double> values;  // row-major, samples x channels
  std::size_t channels = 0;
  std::optional<double> rate_hz;  // nullopt: irregular sampling
  bool preprocessed = false;

  std::size_t samples() const { return timestamps.size(); }
  double& at(std::size_t row, std::size_t ch) { return values[row * channels + ch]; }
  double at(std::size_t row, std::size_t ch) const { return values[row * channels + ch]; }
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  std::string buf(cell);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parse `t,v0,...,v{k-1}` CSV text. The literal `nan` marks a missing reading.
inline SensorStream parse_stream_text(std::string_view text, Modality modality, std::string clip_id,
                                      const std::string& origin = "<memory>") {
  SensorStream s;
  s.clip_id = std::move(clip_id);
  s.modality = modality;
  s.rate_hz = std::nullopt;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (cells.size() < 2 || cells[0] != "t") throw InputError(where + ": missing header 't,v0,...'");
      for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i] != "v" + std::to_string(i - 1)) throw InputError(where + ": malformed header");
      }
      s.channels = cells.size() - 1;
      header_seen = true;
      continue;
    }
    if (cells.size() != s.channels + 1) {
      throw InputError(where + ": expected " + std::to_string(s.channels + 1) + " cells, got " +
                       std::to_string(cells.size()));
    }
    const auto t = detail::parse_number(cells[0]);
    if (!t) throw InputError(where + ": non-numeric timestamp");
    if (!s.timestamps.empty() && *t <= s.timestamps.back()) throw InputError(where + ": non-increasing timestamps");
    s.timestamps.push_back(*t);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i] == "nan") {
        s.values.push_back(kMissing);
        continue;
      }
      const auto v = detail::parse_number(cells[i]);
      if (!v) throw InputError(where + ": non-numeric cell '" + std::string(cells[i]) + "'");
      s.values.push_back(*v);
    }
  }
  if (!header_seen) throw InputError(origin + ": missing header 't,v0,...'");
  return s;
}

inline SensorStream parse_stream(const std::string& path, Modality modality, std::string clip_id = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open stream file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_stream_text(buf.str(), modality, std::move(clip_id), path);
}

/// Serialize in the same CSV contract parse_stream reads.
inline std::string format_stream(const SensorStream& s) {
  std::string out = "t";
  for (std::size_t c = 0; c < s.channels; ++c) out += ",v" + std::to_string(c);
  out += "\n";
  char buf[64];
  for (std::size_t r = 0; r < s.samples(); ++r) {
    std::snprintf(buf, sizeof buf, "%.6f", s.timestamps[r]);
    out += buf;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double v = s.at(r, c);
      if (std::isnan(v)) {
        out += ",nan";
      } else {
        std::snprintf(buf, sizeof buf, ",%.9g", v);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

/// Linear interpolation onto a uniform grid starting at the first timestamp.
/// A grid point between two samples is missing if either neighbor is.
inline SensorStream resample(const SensorStream& in, double target_hz) {
  if (in.samples() < 2) throw InputError("resample: stream " + in.clip_id + " needs at least 2 samples");
  if (!(target_hz > 0.0)) throw std::invalid_argument("resample: target rate must be positive");
  SensorStream out;
  out.clip_id = in.clip_id;
  out.modality = in.modality;
  out.channels = in.channels;
  out.rate_hz = target_hz;
  out.preprocessed = in.preprocessed;

  const double t0 = in.timestamps.front();
  const double span = in.timestamps.back() - t0;
  const auto count = static_cast<std::size_t>(std::floor(span * target_hz + 1e-9)) + 1;
  out.timestamps.reserve(count);
  out.values.reserve(count * in.channels);
  std::size_t left = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) / target_hz;
    while (left + 1 < in.samples() && in.timestamps[left + 1] <= t + 1e-12) ++left;
    out.timestamps.push_back(t);
    const bool exact = std::abs(in.timestamps[left] - t) <= 1e-12 || left + 1 == in.samples();
    const double w = exact ? 0.0 : (t - in.timestamps[left]) / (in.timestamps[left + 1] - in.timestamps[left]);
    for (std::size_t c = 0; c < in.channels; ++c) {
      const double a = in.at(left, c);
      if (exact) {
        out.values.push_back(a);
        continue;
      }
      const double b = in.at(left + 1, c);
      out.values.push_back((std::isnan(a) || std::isnan(b)) ? kMissing : a + w * (b - a));
    }
  }
  return out;
}

}  // namespace s2t::ingest
