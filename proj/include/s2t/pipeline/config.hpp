#pragma once

// Run configuration: one JSON document describing data, preprocessing,
// model sizes, per-stage training settings, ablation flags and metrics.
// Parsing is strict (unknown keys and wrong types are ConfigError) and
// validation runs before any work. Relative paths resolve against the
// directory of the config file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/bridge/decoder.hpp"
#include "s2t/bridge/qformer.hpp"
#include "s2t/encoder/encoder.hpp"
#include "s2t/error.hpp"
#include "s2t/ingest/dataset.hpp"
#include "s2t/json_io.hpp"
#include "s2t/metrics/report.hpp"
#include "s2t/training.hpp"

namespace s2t::pipeline {

using ojson = nlohmann::ordered_json;

namespace detail {

/// Reject unknown keys: `allowed` lists every key the section accepts.
inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

inline std::vector<std::string> keys_of(const ojson& j) {
  std::vector<std::string> out;
  for (const auto& [k, v] : j.items()) out.push_back(k);
  return out;
}

template <class T>
T section(const nlohmann::json& parent, const char* key, const std::string& where, const T& base) {
  if (!parent.contains(key)) return base;
  const std::string path = where.empty() ? key : where + "." + key;
  check_keys(parent[key], keys_of(base.to_json()), path);
  return T::from_json(parent[key], base);
}

inline ojson optional_path(const std::optional<std::string>& p) { return p ? ojson(*p) : ojson(nullptr); }

inline std::optional<std::string> read_optional_path(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

}  // namespace detail

// ---------------------------------------------------------------- sections

/// Parameters of the bundled synthetic dataset generator.
struct SyntheticSpec {
  std::vector<std::string> actions{"peel", "slice"};
  std::vector<std::string> objects{"cucumber", "potato"};
  std::vector<std::string> modalities{"eye", "emg", "body"};
  std::size_t subjects = 6;
  std::size_t encoder_repeats = 2;   // single-activity recordings per (subject, activity)
  std::size_t caption_repeats = 1;   // two-activity recordings per (subject, ordered pair)
  double encoder_recording_s = 8.0;
  double caption_recording_s = 16.0;
  double source_hz = 100.0;
  double noise = 0.05;
  double missing_rate = 0.01;
  std::vector<std::string> questions{"What is the person doing?", "Describe the activity."};

  void validate() const {
    if (actions.empty() || objects.empty()) throw ConfigError("data.synthetic: actions and objects must be non-empty");
    if (actions.size() * objects.size() < 2) throw ConfigError("data.synthetic: at least two activities are required");
    if (modalities.empty()) throw ConfigError("data.synthetic.modalities must be non-empty");
    for (const auto& m : modalities) ingest::parse_modality(m);
    if (subjects == 0) throw ConfigError("data.synthetic.subjects must be positive");
    if (!(encoder_recording_s > 0.0) || !(caption_recording_s > 0.0)) {
      throw ConfigError("data.synthetic recording lengths must be positive");
    }
    if (!(source_hz > 0.0)) throw ConfigError("data.synthetic.source_hz must be positive");
    if (!(noise >= 0.0)) throw ConfigError("data.synthetic.noise must be non-negative");
    if (!(missing_rate >= 0.0 && missing_rate < 0.5)) throw ConfigError("data.synthetic.missing_rate must be in [0, 0.5)");
    if (questions.empty()) throw ConfigError("data.synthetic.questions must be non-empty");
  }

  ojson to_json() const {
    return {{"actions", actions},
            {"objects", objects},
            {"modalities", modalities},
            {"subjects", subjects},
            {"encoder_repeats", encoder_repeats},
            {"caption_repeats", caption_repeats},
            {"encoder_recording_s", encoder_recording_s},
            {"caption_recording_s", caption_recording_s},
            {"source_hz", source_hz},
            {"noise", noise},
            {"missing_rate", missing_rate},
            {"questions", questions}};
  }

  static SyntheticSpec from_json(const nlohmann::json& j, SyntheticSpec s) {
    s.actions = j.value("actions", s.actions);
    s.objects = j.value("objects", s.objects);
    s.modalities = j.value("modalities", s.modalities);
    s.subjects = j.value("subjects", s.subjects);
    s.encoder_repeats = j.value("encoder_repeats", s.encoder_repeats);
    s.caption_repeats = j.value("caption_repeats", s.caption_repeats);
    s.encoder_recording_s = j.value("encoder_recording_s", s.encoder_recording_s);
    s.caption_recording_s = j.value("caption_recording_s", s.caption_recording_s);
    s.source_hz = j.value("source_hz", s.source_hz);
    s.noise = j.value("noise", s.noise);
    s.missing_rate = j.value("missing_rate", s.missing_rate);
    s.questions = j.value("questions", s.questions);
    return s;
  }
};

/// Inputs. A null manifest selects the synthetic generator; a null teacher
/// file selects synthetic teacher embeddings for the manifest's keys; a
/// null instruct file derives templated Q&A from the teacher-keyed entries;
/// a captions file ({clip_id, caption} lines) overrides manifest captions.
struct DataConfig {
  std::string name = "synthetic";
  std::optional<std::string> manifest;
  std::optional<std::string> teacher;
  std::optional<std::string> instruct;
  std::optional<std::string> captions;
  std::optional<std::string> templates;
  SyntheticSpec synthetic;

  ojson to_json() const {
    return {{"name", name},
            {"manifest", detail::optional_path(manifest)},
            {"teacher", detail::optional_path(teacher)},
            {"instruct", detail::optional_path(instruct)},
            {"captions", detail::optional_path(captions)},
            {"templates", detail::optional_path(templates)},
            {"synthetic", synthetic.to_json()}};
  }

  static DataConfig from_json(const nlohmann::json& j, DataConfig d) {
    d.name = j.value("name", d.name);
    if (j.contains("manifest")) d.manifest = detail::read_optional_path(j, "manifest");
    if (j.contains("teacher")) d.teacher = detail::read_optional_path(j, "teacher");
    if (j.contains("instruct")) d.instruct = detail::read_optional_path(j, "instruct");
    if (j.contains("captions")) d.captions = detail::read_optional_path(j, "captions");
    if (j.contains("templates")) d.templates = detail::read_optional_path(j, "templates");
    d.synthetic = detail::section(j, "synthetic", "data", d.synthetic);
    return d;
  }
};

struct PreprocessConfig {
  double rate_hz = 50.0;
  ingest::PreprocessOptions options;

  void validate() const {
    if (!(rate_hz > 0.0)) throw ConfigError("preprocess.rate_hz must be positive");
    if (!(options.eye_low < options.eye_high)) throw ConfigError("preprocess: eye_low must be below eye_high");
    if (!(options.emg_cutoff_hz > 0.0 && options.emg_cutoff_hz < rate_hz / 2.0)) {
      throw ConfigError("preprocess.emg_cutoff_hz must lie in (0, rate_hz / 2)");
    }
    if (options.emg_order <= 0 || options.emg_order % 2 != 0) throw ConfigError("preprocess.emg_order must be a positive even number");
    if (!(options.body_range_deg > 0.0)) throw ConfigError("preprocess.body_range_deg must be positive");
  }

  ojson to_json() const {
    return {{"rate_hz", rate_hz},
            {"eye_outliers", options.eye_outliers == ingest::EyeOutlierMode::clamp ? "clamp" : "remove"},
            {"eye_low", options.eye_low},
            {"eye_high", options.eye_high},
            {"emg_cutoff_hz", options.emg_cutoff_hz},
            {"emg_order", options.emg_order},
            {"body_range_deg", options.body_range_deg}};
  }

  static PreprocessConfig from_json(const nlohmann::json& j, PreprocessConfig p) {
    p.rate_hz = j.value("rate_hz", p.rate_hz);
    if (j.contains("eye_outliers")) {
      const auto mode = j["eye_outliers"].get<std::string>();
      if (mode == "clamp") {
        p.options.eye_outliers = ingest::EyeOutlierMode::clamp;
      } else if (mode == "remove") {
        p.options.eye_outliers = ingest::EyeOutlierMode::remove;
      } else {
        throw ConfigError("preprocess.eye_outliers must be \"clamp\" or \"remove\"");
      }
    }
    p.options.eye_low = j.value("eye_low", p.options.eye_low);
    p.options.eye_high = j.value("eye_high", p.options.eye_high);
    p.options.emg_cutoff_hz = j.value("emg_cutoff_hz", p.options.emg_cutoff_hz);
    p.options.emg_order = j.value("emg_order", p.options.emg_order);
    p.options.body_range_deg = j.value("body_range_deg", p.options.body_range_deg);
    return p;
  }
};

struct SplitConfig {
  ingest::SplitMode mode = ingest::SplitMode::uniform;
  ingest::SplitFractions fractions{0.7, 0.15, 0.15};

  ojson to_json() const { return {{"mode", std::string(ingest::to_string(mode))}, {"fractions", fractions}}; }

  static SplitConfig from_json(const nlohmann::json& j, SplitConfig s) {
    if (j.contains("mode")) s.mode = ingest::parse_split_mode(j["mode"].get<std::string>());
    if (j.contains("fractions")) {
      const auto f = j["fractions"].get<std::vector<double>>();
      if (f.size() != 3) throw ConfigError("split.fractions must list train, validation and test fractions");
      s.fractions = {f[0], f[1], f[2]};
    }
    return s;
  }
};

struct ClipConfig {
  double encoder_window_s = 2.0;
  double encoder_stride_s = 2.0;
  double decoder_window_s = 16.0;
  double decoder_stride_s = 16.0;

  void validate() const {
    if (!(encoder_window_s > 0.0 && encoder_stride_s > 0.0 && decoder_window_s > 0.0 && decoder_stride_s > 0.0)) {
      throw ConfigError("clips: windows and strides must be positive");
    }
  }

  ojson to_json() const {
    return {{"encoder_window_s", encoder_window_s},
            {"encoder_stride_s", encoder_stride_s},
            {"decoder_window_s", decoder_window_s},
            {"decoder_stride_s", decoder_stride_s}};
  }

  static ClipConfig from_json(const nlohmann::json& j, ClipConfig c) {
    c.encoder_window_s = j.value("encoder_window_s", c.encoder_window_s);
    c.encoder_stride_s = j.value("encoder_stride_s", c.encoder_stride_s);
    c.decoder_window_s = j.value("decoder_window_s", c.decoder_window_s);
    c.decoder_stride_s = j.value("decoder_stride_s", c.decoder_stride_s);
    return c;
  }
};

/// Per-modality encoder shape shared by every configured modality; the
/// channel count comes from the preprocessed data.
struct EncoderSection {
  encoder::ModalityEncoderConfig modality;
  std::size_t d_output = 64;
  TrainSettings train{.lr = 1e-3, .epochs = 60};

  ojson to_json() const {
    ojson m = modality.to_json();
    m.erase("channels");
    return {{"modality", m}, {"d_output", d_output}, {"train", train.to_json()}};
  }

  static EncoderSection from_json(const nlohmann::json& j, EncoderSection e) {
    if (j.contains("modality")) {
      ojson allowed = e.modality.to_json();
      allowed.erase("channels");
      detail::check_keys(j["modality"], detail::keys_of(allowed), "encoder.modality");
      e.modality = encoder::ModalityEncoderConfig::from_json(j["modality"], e.modality);
    }
    e.d_output = j.value("d_output", e.d_output);
    e.train = detail::section(j, "train", "encoder", e.train);
    return e;
  }
};

struct DecoderSection {
  bridge::DecoderConfig arch{.d_model = 64, .heads = 4, .head_dim = 16, .ffn_hidden = 128};
  TrainSettings train{.lr = 3e-3, .batch_size = 8, .epochs = 120};
  bool slotted_text = true;  // also train on prompts whose slots hold the caption's words

  ojson to_json() const {
    ojson j = arch.to_json();
    j["train"] = train.to_json();
    j["slotted_text"] = slotted_text;
    return j;
  }

  static DecoderSection from_json(const nlohmann::json& j, DecoderSection d) {
    d.arch = bridge::DecoderConfig::from_json(j, d.arch);
    d.train = detail::section(j, "train", "decoder", d.train);
    d.slotted_text = j.value("slotted_text", d.slotted_text);
    return d;
  }
};

/// Q-former shape (input and output widths follow the encoder and decoder),
/// temporal tokens, noise, and both bridge training stages.
struct BridgeSection {
  bridge::QFormerConfig qformer{.queries = 4};
  std::size_t temporal_segments = 8;
  double noise_variance = 1e-4;
  bool stage2_noise = true;
  std::size_t max_len = 32;
  TrainSettings stage1{.lr = 5e-3, .batch_size = 8, .epochs = 120, .patience = 25};
  TrainSettings stage2{.lr = 1e-3, .batch_size = 4, .epochs = 30};

  ojson to_json() const {
    ojson q = qformer.to_json();
    q.erase("d_input");
    q.erase("d_model");
    return {{"qformer", q},
            {"temporal_segments", temporal_segments},
            {"noise_variance", noise_variance},
            {"stage2_noise", stage2_noise},
            {"max_len", max_len},
            {"stage1", stage1.to_json()},
            {"stage2", stage2.to_json()}};
  }

  static BridgeSection from_json(const nlohmann::json& j, BridgeSection b) {
    if (j.contains("qformer")) {
      ojson allowed = b.qformer.to_json();
      allowed.erase("d_input");
      allowed.erase("d_model");
      detail::check_keys(j["qformer"], detail::keys_of(allowed), "bridge.qformer");
      b.qformer = bridge::QFormerConfig::from_json(j["qformer"], b.qformer);
    }
    b.temporal_segments = j.value("temporal_segments", b.temporal_segments);
    b.noise_variance = j.value("noise_variance", b.noise_variance);
    b.stage2_noise = j.value("stage2_noise", b.stage2_noise);
    b.max_len = j.value("max_len", b.max_len);
    b.stage1 = detail::section(j, "stage1", "bridge", b.stage1);
    b.stage2 = detail::section(j, "stage2", "bridge", b.stage2);
    return b;
  }
};

struct AblationFlags {
  bool no_temporal = false;  // one segment embedding instead of n time-ordered ones
  bool no_noise = false;     // no noise injection in either bridge stage
  bool no_stage1 = false;    // evaluate after pretrain-lm with an untrained Q-former

  bool operator==(const AblationFlags&) const = default;

  ojson to_json() const { return {{"no_temporal", no_temporal}, {"no_noise", no_noise}, {"no_stage1", no_stage1}}; }
  static AblationFlags from_json(const nlohmann::json& j, AblationFlags a) {
    a.no_temporal = j.value("no_temporal", a.no_temporal);
    a.no_noise = j.value("no_noise", a.no_noise);
    a.no_stage1 = j.value("no_stage1", a.no_stage1);
    return a;
  }
};

// ---------------------------------------------------------------- RunConfig

struct RunConfig {
  std::uint64_t seed = 7;
  DataConfig data;
  PreprocessConfig preprocess;
  std::vector<ingest::Modality> modalities{ingest::Modality::eye, ingest::Modality::emg, ingest::Modality::body};
  SplitConfig split;
  ClipConfig clips;
  EncoderSection encoder;
  DecoderSection decoder;
  BridgeSection bridge;
  AblationFlags ablation;
  metrics::MetricSettings metrics;
  std::string out = "runs/default";

  /// Segments per decoder clip after ablation flags.
  std::size_t effective_segments() const { return ablation.no_temporal ? 1 : bridge.temporal_segments; }
  double stage1_noise() const { return ablation.no_noise ? 0.0 : bridge.noise_variance; }
  double stage2_noise() const { return ablation.no_noise || !bridge.stage2_noise ? 0.0 : bridge.noise_variance; }

  std::size_t encoder_window_samples() const {
    return static_cast<std::size_t>(std::llround(clips.encoder_window_s * preprocess.rate_hz));
  }

  bridge::QFormerConfig qformer_config() const {
    bridge::QFormerConfig q = bridge.qformer;
    q.d_input = encoder.d_output;
    q.d_model = decoder.arch.d_model;
    return q;
  }

  /// Structural checks that need no data.
  void validate() const {
    data.synthetic.validate();
    preprocess.validate();
    if (modalities.empty()) throw ConfigError("modalities must list at least one modality");
    std::set<ingest::Modality> seen(modalities.begin(), modalities.end());
    if (seen.size() != modalities.size()) throw ConfigError("modalities contains duplicates");
    ingest::validate_fractions(split.fractions);
    clips.validate();
    encoder.train.validate("encoder.train");
    decoder.arch.validate();
    decoder.train.validate("decoder.train");
    qformer_config().validate();
    bridge.stage1.validate("bridge.stage1");
    bridge.stage2.validate("bridge.stage2");
    if (bridge.temporal_segments == 0) throw ConfigError("bridge.temporal_segments must be at least 1");
    if (!(bridge.noise_variance >= 0.0)) throw ConfigError("bridge.noise_variance must be non-negative");
    if (bridge.max_len == 0) throw ConfigError("bridge.max_len must be at least 1");
    metrics.validate();
    if (out.empty()) throw ConfigError("out must name an output directory");

    // Encoder shape checks with a placeholder channel count.
    encoder::EncoderConfig ec;
    for (auto m : modalities) {
      auto mc = encoder.modality;
      mc.channels = 1;
      ec.modalities[m] = mc;
    }
    ec.d_output = ec.teacher_dim = encoder.d_output;
    ec.validate();
    const std::size_t window = encoder_window_samples();
    if (window < encoder.modality.window) {
      throw ConfigError("clips.encoder_window_s holds fewer samples than one encoder token window");
    }
    const double per_segment = clips.decoder_window_s / static_cast<double>(effective_segments());
    if (per_segment + 1e-9 < clips.encoder_window_s) {
      throw ConfigError("clips.decoder_window_s / bridge.temporal_segments is shorter than clips.encoder_window_s");
    }
    const std::size_t prompt_slots = bridge.qformer.queries * effective_segments();
    if (prompt_slots + 64 > decoder.arch.max_positions) {
      throw ConfigError("decoder.max_positions is too small for " + std::to_string(prompt_slots) + " sensor slots");
    }
  }

  ojson to_json() const {
    ojson mods = ojson::array();
    for (auto m : modalities) mods.push_back(std::string(ingest::to_string(m)));
    return {{"seed", seed},
            {"data", data.to_json()},
            {"preprocess", preprocess.to_json()},
            {"modalities", mods},
            {"split", split.to_json()},
            {"clips", clips.to_json()},
            {"encoder", encoder.to_json()},
            {"decoder", decoder.to_json()},
            {"bridge", bridge.to_json()},
            {"ablation", ablation.to_json()},
            {"metrics", metrics.to_json()},
            {"out", out}};
  }

  /// Strict parse. `base_dir` resolves relative data paths.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    const RunConfig defaults;
    detail::check_keys(j, detail::keys_of(defaults.to_json()), "");
    RunConfig c;
    try {
      c.seed = j.value("seed", c.seed);
      c.data = detail::section(j, "data", "", c.data);
      c.preprocess = detail::section(j, "preprocess", "", c.preprocess);
      if (j.contains("modalities")) {
        c.modalities.clear();
        for (const auto& m : j["modalities"]) c.modalities.push_back(ingest::parse_modality(m.get<std::string>()));
      }
      c.split = detail::section(j, "split", "", c.split);
      c.clips = detail::section(j, "clips", "", c.clips);
      c.encoder = detail::section(j, "encoder", "", c.encoder);
      if (j.contains("decoder")) {
        ojson allowed = c.decoder.to_json();
        detail::check_keys(j["decoder"], detail::keys_of(allowed), "decoder");
        c.decoder = DecoderSection::from_json(j["decoder"], c.decoder);
      }
      c.bridge = detail::section(j, "bridge", "", c.bridge);
      c.ablation = detail::section(j, "ablation", "", c.ablation);
      c.metrics = detail::section(j, "metrics", "", c.metrics);
      c.out = j.value("out", c.out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    auto resolve = [&](std::optional<std::string>& p) {
      if (p && !base_dir.empty() && std::filesystem::path(*p).is_relative()) p = (base_dir / *p).lexically_normal().string();
    };
    resolve(c.data.manifest);
    resolve(c.data.teacher);
    resolve(c.data.instruct);
    resolve(c.data.captions);
    resolve(c.data.templates);
    return c;
  }

  static RunConfig load(const std::filesystem::path& p) {
    const auto j = json_io::parse(io::read_file(p), p.string());
    return from_json(j, p.parent_path());
  }
};

/// Set a dotted key path in a JSON document (CLI overrides). The value is
/// parsed as JSON when possible, else taken as a string.
inline void apply_override(ojson& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  ojson value;
  try {
    value = ojson::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  ojson* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (!node->is_object()) throw ConfigError("override '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = ojson::object();
    start = dot + 1;
  }
}

}  // namespace s2t::pipeline
