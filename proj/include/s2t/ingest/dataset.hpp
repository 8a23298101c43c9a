#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/error.hpp"
#include "s2t/ingest/preprocess.hpp"
#include "s2t/ingest/stream.hpp"
#include "s2t/numerics/rng.hpp"

namespace s2t::ingest {

struct ManifestEntry {
  std::string clip_id;
  std::string subject_id;
  std::map<Modality, std::string> modality_files;
  std::string label;
  std::string caption;
  std::optional<std::string> teacher_key;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // stream paths are relative to this

  std::filesystem::path resolve(const std::string& file) const {
    const std::filesystem::path p(file);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& [mod, path] : e.modality_files) files[std::string(to_string(mod))] = path;
    nlohmann::ordered_json j;
    j["clip_id"] = e.clip_id;
    j["subject_id"] = e.subject_id;
    j["modality_files"] = files;
    j["label"] = e.label;
    j["caption"] = e.caption;
    j["teacher_key"] = e.teacher_key ? nlohmann::ordered_json(*e.teacher_key) : nlohmann::ordered_json(nullptr);
    arr.push_back(j);
  }
  return arr;
}

inline Manifest manifest_from_json(const nlohmann::json& arr, std::filesystem::path base_dir) {
  if (!arr.is_array()) throw InputError("manifest must be a JSON array");
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::set<std::string> ids;
  for (const auto& j : arr) {
    ManifestEntry e;
    try {
      e.clip_id = j.at("clip_id").get<std::string>();
      e.subject_id = j.at("subject_id").get<std::string>();
      for (const auto& [mod, path] : j.at("modality_files").items()) {
        e.modality_files[parse_modality(mod)] = path.get<std::string>();
      }
      e.label = j.at("label").get<std::string>();
      e.caption = j.value("caption", std::string{});
      if (j.contains("teacher_key") && !j["teacher_key"].is_null()) e.teacher_key = j["teacher_key"].get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(std::string("malformed manifest entry: ") + ex.what());
    }
    if (!ids.insert(e.clip_id).second) throw InputError("duplicate clip_id in manifest: " + e.clip_id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError("manifest " + path.string() + " is not valid JSON: " + ex.what());
  }
  return manifest_from_json(j, path.parent_path());
}

// ------------------------------------------------------------------ clips

/// One manifest entry with its streams resampled and preprocessed.
struct Recording {
  ManifestEntry entry;
  std::map<Modality, SensorStream> streams;
};

struct ClipRecord {
  std::string clip_id;
  std::string source_id;
  std::string subject_id;
  double start = 0.0;
  double end = 0.0;
  std::map<Modality, SensorStream> streams;
  std::string label;
  std::string caption;
  std::optional<std::string> teacher_key;
};

/// Cut every recording into fixed windows. All streams of a recording must
/// share one sampling rate; windows start at the latest stream start and
/// incomplete tails are dropped.
inline std::vector<ClipRecord> segment_clips(const std::vector<Recording>& recordings, double window_s,
                                             double stride_s) {
  if (!(window_s > 0.0) || !(stride_s > 0.0)) throw std::invalid_argument("segment_clips: window and stride must be positive");
  std::vector<ClipRecord> clips;
  for (const Recording& rec : recordings) {
    if (rec.streams.empty()) throw InputError("recording " + rec.entry.clip_id + " has no streams");
    const double rate = *rec.streams.begin()->second.rate_hz;
    double common_start = -INFINITY;
    for (const auto& [mod, s] : rec.streams) {
      if (!s.preprocessed || !s.rate_hz) throw InputError("segment_clips: stream " + s.clip_id + " not preprocessed");
      if (std::abs(*s.rate_hz - rate) > 1e-9) throw InputError("segment_clips: streams of " + rec.entry.clip_id + " differ in rate");
      common_start = std::max(common_start, s.timestamps.front());
    }
    const auto window = static_cast<std::size_t>(std::llround(window_s * rate));
    const auto stride = static_cast<std::size_t>(std::llround(stride_s * rate));
    std::size_t count = SIZE_MAX;
    std::map<Modality, std::size_t> offsets;
    for (const auto& [mod, s] : rec.streams) {
      const auto off = static_cast<std::size_t>(std::llround((common_start - s.timestamps.front()) * rate));
      const std::size_t avail = s.samples() > off ? s.samples() - off : 0;
      if (avail < window) {
        throw InputError("segment_clips: window of " + std::to_string(window_s) + " s is longer than stream " +
                         s.clip_id + " (" + std::string(to_string(mod)) + ")");
      }
      offsets[mod] = off;
      count = std::min(count, (avail - window) / stride + 1);
    }
    for (std::size_t k = 0; k < count; ++k) {
      ClipRecord clip;
      clip.clip_id = rec.entry.clip_id + "#" + std::to_string(k);
      clip.source_id = rec.entry.clip_id;
      clip.subject_id = rec.entry.subject_id;
      clip.start = common_start + static_cast<double>(k * stride) / rate;
      clip.end = clip.start + static_cast<double>(window) / rate;
      clip.label = rec.entry.label;
      clip.caption = rec.entry.caption;
      clip.teacher_key = rec.entry.teacher_key;
      for (const auto& [mod, s] : rec.streams) {
        SensorStream w;
        w.clip_id = clip.clip_id;
        w.modality = mod;
        w.channels = s.channels;
        w.rate_hz = s.rate_hz;
        w.preprocessed = true;
        const std::size_t first = offsets[mod] + k * stride;
        w.timestamps.assign(s.timestamps.begin() + static_cast<std::ptrdiff_t>(first),
                            s.timestamps.begin() + static_cast<std::ptrdiff_t>(first + window));
        w.values.assign(s.values.begin() + static_cast<std::ptrdiff_t>(first * s.channels),
                        s.values.begin() + static_cast<std::ptrdiff_t>((first + window) * s.channels));
        clip.streams.emplace(mod, std::move(w));
      }
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

// ------------------------------------------------------------------ splits

enum class SplitMode { uniform, by_subject };

inline std::string_view to_string(SplitMode m) { return m == SplitMode::uniform ? "uniform" : "by_subject"; }

inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "uniform") return SplitMode::uniform;
  if (s == "by_subject") return SplitMode::by_subject;
  throw ConfigError("unknown split mode '" + std::string(s) + "'");
}

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  SplitMode mode = SplitMode::uniform;

  enum class Part { train, validation, test, none };
  Part part_of(const std::string& id) const {
    auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), id) != v.end(); };
    if (has(train)) return Part::train;
    if (has(validation)) return Part::validation;
    if (has(test)) return Part::test;
    return Part::none;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = std::string(to_string(mode));
    j["train"] = train;
    j["validation"] = validation;
    j["test"] = test;
    return j;
  }
  static DatasetSplit from_json(const nlohmann::json& j) {
    DatasetSplit s;
    s.mode = parse_split_mode(j.at("mode").get<std::string>());
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  }
};

using SplitFractions = std::array<double, 3>;

inline void validate_fractions(const SplitFractions& f) {
  for (double v : f) {
    if (!(v >= 0.0)) throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

namespace detail {

// Sizes for (validation, test); train takes the remainder.
inline std::pair<std::size_t, std::size_t> holdout_sizes(std::size_t n, const SplitFractions& f, bool at_least_one) {
  auto size = [&](double frac) {
    auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    if (at_least_one && frac > 0.0) k = std::max<std::size_t>(k, 1);
    return k;
  };
  return {size(f[1]), size(f[2])};
}

}  // namespace detail

/// Deterministic train/validation/test partition of (clip_id, subject_id)
/// pairs. In by_subject mode every subject lands in exactly one partition.
inline DatasetSplit split_dataset(const std::vector<std::pair<std::string, std::string>>& items, SplitMode mode,
                                  const SplitFractions& fractions, std::uint64_t seed) {
  validate_fractions(fractions);
  Rng rng = Rng(seed).substream("split");
  DatasetSplit split;
  split.mode = mode;
  if (mode == SplitMode::uniform) {
    std::vector<std::string> ids;
    for (const auto& [id, subject] : items) ids.push_back(id);
    rng.shuffle(ids);
    const auto [n_val, n_test] = detail::holdout_sizes(ids.size(), fractions, false);
    if (n_val + n_test > ids.size()) throw ConfigError("split: not enough items");
    split.validation.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val),
                      ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    split.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
    return split;
  }

  std::set<std::string> subject_set;
  for (const auto& [id, subject] : items) subject_set.insert(subject);
  std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
  if (subjects.size() < 3) {
    throw ConfigError("by_subject split needs at least 3 subjects, found " + std::to_string(subjects.size()));
  }
  rng.shuffle(subjects);
  auto [n_val, n_test] = detail::holdout_sizes(subjects.size(), fractions, true);
  if (n_val + n_test >= subjects.size()) throw ConfigError("by_subject split leaves no training subject");
  std::map<std::string, DatasetSplit::Part> assign;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    assign[subjects[i]] = i < n_val            ? DatasetSplit::Part::validation
                          : i < n_val + n_test ? DatasetSplit::Part::test
                                               : DatasetSplit::Part::train;
  }
  for (const auto& [id, subject] : items) {
    switch (assign[subject]) {
      case DatasetSplit::Part::validation: split.validation.push_back(id); break;
      case DatasetSplit::Part::test: split.test.push_back(id); break;
      default: split.train.push_back(id); break;
    }
  }
  return split;
}

inline DatasetSplit split_manifest(const Manifest& m, SplitMode mode, const SplitFractions& fractions,
                                   std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& e : m.entries) items.emplace_back(e.clip_id, e.subject_id);
  return split_dataset(items, mode, fractions, seed);
}

// ------------------------------------------------------------------ loading

struct LoadOptions {
  double rate_hz = 50.0;
  std::vector<Modality> modalities;  // empty: every modality in the entry
  PreprocessOptions preprocess;
};

/// Parse and resample every configured stream of one entry (no preprocessing).
inline std::map<Modality, SensorStream> load_raw_streams(const Manifest& m, const ManifestEntry& e,
                                                         const LoadOptions& opt) {
  std::map<Modality, SensorStream> out;
  auto want = [&](Modality mod) {
    return opt.modalities.empty() || std::find(opt.modalities.begin(), opt.modalities.end(), mod) != opt.modalities.end();
  };
  for (const auto& [mod, file] : e.modality_files) {
    if (!want(mod)) continue;
    out.emplace(mod, resample(parse_stream(m.resolve(file).string(), mod, e.clip_id), opt.rate_hz));
  }
  for (Modality mod : opt.modalities) {
    if (!out.count(mod)) {
      throw InputError("manifest entry " + e.clip_id + " lacks modality " + std::string(to_string(mod)));
    }
  }
  return out;
}

inline Recording load_recording(const Manifest& m, const ManifestEntry& e, const PreprocessStats& stats,
                                const LoadOptions& opt) {
  Recording rec{e, {}};
  for (auto& [mod, s] : load_raw_streams(m, e, opt)) rec.streams.emplace(mod, preprocess(std::move(s), stats, opt.preprocess));
  return rec;
}

/// Fit preprocessing stats on the streams of the given (training) entries only.
inline PreprocessStats fit_stats_on(const Manifest& m, const std::vector<std::string>& ids, const LoadOptions& opt) {
  std::vector<SensorStream> streams;
  for (const auto& e : m.entries) {
    if (std::find(ids.begin(), ids.end(), e.clip_id) == ids.end()) continue;
    for (auto& [mod, s] : load_raw_streams(m, e, opt)) streams.push_back(std::move(s));
  }
  return fit_stats(streams, opt.preprocess);
}

}  // namespace s2t::ingest
