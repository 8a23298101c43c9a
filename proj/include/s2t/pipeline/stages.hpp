#pragma once

// The training pipeline as resumable stages:
//   data -> preprocess -> encoder -> decoder (pretrain-lm) -> stage1 -> stage2 -> evaluate
// Each stage writes its artifacts atomically into its own directory and is
// skipped when those artifacts already exist, unless the stage is forced.
// Every stage is deterministic given the config, so a skipped stage and a
// recomputed one yield the same bytes.

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/bridge/train.hpp"
#include "s2t/checkpoint.hpp"
#include "s2t/encoder/train.hpp"
#include "s2t/ingest/dataset.hpp"
#include "s2t/json_io.hpp"
#include "s2t/metrics/report.hpp"
#include "s2t/pipeline/config.hpp"
#include "s2t/pipeline/synthetic.hpp"

namespace s2t::pipeline {

namespace fs = std::filesystem;

enum class Stage { data, preprocess, encoder, decoder, stage1, stage2, evaluate };

inline constexpr Stage kAllStages[] = {Stage::data,   Stage::preprocess, Stage::encoder, Stage::decoder,
                                       Stage::stage1, Stage::stage2,     Stage::evaluate};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::data: return "data";
    case Stage::preprocess: return "preprocess";
    case Stage::encoder: return "encoder";
    case Stage::decoder: return "decoder";
    case Stage::stage1: return "stage1";
    case Stage::stage2: return "stage2";
    case Stage::evaluate: return "evaluate";
  }
  return "unknown";
}

/// Where each stage keeps its artifacts. Experiments point several runs at
/// shared upstream directories.
struct StagePaths {
  fs::path data, preprocess, encoder, decoder, stage1, stage2, eval;

  static StagePaths under(const fs::path& root) {
    return {root / "data", root / "preprocess", root / "encoder", root / "decoder",
            root / "stage1", root / "stage2", root / "eval"};
  }
};

// ---------------------------------------------------------------- inputs

struct InstructRecord {
  std::string teacher_key;
  std::string question;
  std::string answer;
};

inline std::vector<InstructRecord> read_instruct(const fs::path& p) {
  std::vector<InstructRecord> out;
  for (const auto& j : json_io::read_jsonl(p)) {
    out.push_back({json_io::require_string(j, "teacher_key", p.string()), json_io::require_string(j, "question", p.string()),
                   json_io::require_string(j, "answer", p.string())});
  }
  return out;
}

/// {clip_id, caption} lines; returns clip_id -> caption.
inline std::map<std::string, std::string> read_captions(const fs::path& p) {
  std::map<std::string, std::string> out;
  for (const auto& j : json_io::read_jsonl(p)) {
    const std::string id = json_io::require_string(j, "clip_id", p.string());
    if (!out.emplace(id, json_io::require_string(j, "caption", p.string())).second) {
      throw InputError(p.string() + ": duplicate clip_id '" + id + "'");
    }
  }
  return out;
}

struct DataSources {
  fs::path manifest;
  std::optional<fs::path> teacher;
  std::optional<fs::path> instruct;
  std::optional<fs::path> captions;
  std::optional<fs::path> templates;
};

template <class T>
struct Parts {
  std::vector<T> train, validation, test;

  std::vector<T>& operator[](ingest::DatasetSplit::Part p) {
    switch (p) {
      case ingest::DatasetSplit::Part::train: return train;
      case ingest::DatasetSplit::Part::validation: return validation;
      case ingest::DatasetSplit::Part::test: return test;
      case ingest::DatasetSplit::Part::none: break;
    }
    throw std::logic_error("item outside the split");
  }
  const std::vector<T>& get(const std::string& name) const {
    if (name == "train") return train;
    if (name == "validation") return validation;
    if (name == "test") return test;
    throw ConfigError("unknown split part '" + name + "' (expected train, validation or test)");
  }
};

/// Everything the training stages read, loaded once per process.
struct PreparedData {
  ingest::Manifest manifest;
  ingest::DatasetSplit split;
  ingest::PreprocessStats stats;
  std::optional<encoder::TeacherProvider> teacher;
  bridge::PromptTemplates templates;
  std::vector<InstructRecord> instruct;
  Parts<ingest::ClipRecord> encoder_clips;  // teacher-keyed windows
  Parts<ingest::ClipRecord> decoder_clips;  // captioned windows
};

/// Write `<out>/config.resolved.json`. An existing file describing a
/// different config is an error unless `overwrite` is set, so one output
/// directory never mixes artifacts of two configurations.
inline void claim_output_dir(const RunConfig& config, const fs::path& out, bool overwrite) {
  const fs::path file = out / "config.resolved.json";
  ojson resolved = config.to_json();
  resolved.erase("out");
  const std::string text = resolved.dump(2) + "\n";
  if (fs::exists(file) && !overwrite && io::read_file(file) != text) {
    throw ConfigError(out.string() + " holds outputs of a different configuration; use --force to replace them");
  }
  io::atomic_write(file, text);
}

// ---------------------------------------------------------------- pipeline

class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  Pipeline(RunConfig config, StagePaths paths, std::set<Stage> forced = {}, Logger log = {})
      : config_(std::move(config)), paths_(std::move(paths)), forced_(std::move(forced)), log_(std::move(log)) {
    config_.validate();
    // Recomputing a stage invalidates everything after it.
    // Encoder and decoder are independent of each other.
    for (Stage s : kAllStages) {
      if (!forced_.contains(s)) continue;
      for (Stage later : kAllStages) {
        const bool sibling = (s == Stage::encoder && later == Stage::decoder);
        if (later > s && !sibling) forced_.insert(later);
      }
    }
  }

  const RunConfig& config() const { return config_; }
  const StagePaths& paths() const { return paths_; }

  // ------------------------------------------------------------ data

  /// Input files; the synthetic generator runs when no manifest is configured.
  DataSources data() {
    const auto& d = config_.data;
    if (d.manifest) {
      auto opt = [](const std::optional<std::string>& p) { return p ? std::optional<fs::path>(*p) : std::nullopt; };
      DataSources src{*d.manifest, opt(d.teacher), opt(d.instruct), opt(d.captions), opt(d.templates)};
      if (!fs::exists(src.manifest)) throw InputError("manifest not found: " + src.manifest.string());
      for (const auto& p : {src.teacher, src.instruct, src.captions, src.templates}) {
        if (p && !fs::exists(*p)) throw InputError("input file not found: " + p->string());
      }
      return src;
    }
    const fs::path manifest = paths_.data / "manifest.json";
    if (!skip(Stage::data, manifest)) {
      note("data: writing synthetic dataset to " + paths_.data.string());
      write_synthetic_dataset(d.synthetic, config_.seed, config_.encoder.d_output, paths_.data);
    }
    DataSources src{manifest, paths_.data / "teacher.s2te", paths_.data / "instruct.jsonl",
                    paths_.data / "captions.jsonl", paths_.data / "templates.json"};
    // Explicit overrides still win over the generated files.
    if (d.teacher) src.teacher = *d.teacher;
    if (d.instruct) src.instruct = *d.instruct;
    if (d.captions) src.captions = *d.captions;
    if (d.templates) src.templates = *d.templates;
    return src;
  }

  // ------------------------------------------------------------ preprocess

  /// Split, normalization stats (training entries only) and clips.
  const PreparedData& prepared() {
    if (prepared_) return *prepared_;
    const DataSources src = data();
    PreparedData p;
    p.manifest = ingest::load_manifest(src.manifest);
    if (p.manifest.entries.empty()) throw InputError("manifest " + src.manifest.string() + " has no entries");
    if (src.captions) {
      const auto captions = read_captions(*src.captions);
      for (auto& e : p.manifest.entries) {
        if (const auto it = captions.find(e.clip_id); it != captions.end()) e.caption = it->second;
      }
    }
    const ingest::LoadOptions load{config_.preprocess.rate_hz, config_.modalities, config_.preprocess.options};

    const fs::path split_file = paths_.preprocess / "split.json";
    const fs::path stats_file = paths_.preprocess / "stats.json";
    if (skip(Stage::preprocess, stats_file) && fs::exists(split_file)) {
      try {
        p.split = ingest::DatasetSplit::from_json(json_io::load(split_file));
        p.stats = ingest::PreprocessStats::from_json(json_io::load(stats_file));
      } catch (const nlohmann::json::exception& e) {
        throw CorruptionError("preprocess artifacts in " + paths_.preprocess.string() + " are malformed: " + e.what());
      }
    } else {
      note("preprocess: splitting " + std::to_string(p.manifest.entries.size()) + " entries and fitting stats");
      p.split = ingest::split_manifest(p.manifest, config_.split.mode, config_.split.fractions, config_.seed);
      p.stats = ingest::fit_stats_on(p.manifest, p.split.train, load);
      io::atomic_write(split_file, p.split.to_json().dump(2) + "\n");
      io::atomic_write(stats_file, p.stats.to_json().dump(2) + "\n");
    }

    for (const auto& e : p.manifest.entries) {
      const auto part = p.split.part_of(e.clip_id);
      if (part == ingest::DatasetSplit::Part::none) {
        throw InputError("manifest entry " + e.clip_id + " is not in the stored split; rerun preprocess with --force");
      }
      const ingest::Recording rec = ingest::load_recording(p.manifest, e, p.stats, load);
      if (e.teacher_key) {
        for (auto& c : ingest::segment_clips({rec}, config_.clips.encoder_window_s, config_.clips.encoder_stride_s)) {
          p.encoder_clips[part].push_back(std::move(c));
        }
      }
      if (!e.caption.empty() && duration(rec) + 1e-9 >= config_.clips.decoder_window_s) {
        for (auto& c : ingest::segment_clips({rec}, config_.clips.decoder_window_s, config_.clips.decoder_stride_s)) {
          p.decoder_clips[part].push_back(std::move(c));
        }
      }
    }
    write_clip_summary(p);

    if (src.teacher) {
      p.teacher = encoder::TeacherProvider::load(*src.teacher);
    } else {
      p.teacher = encoder::TeacherProvider::synthetic(config_.seed, config_.encoder.d_output);
    }
    if (p.teacher->dim() != config_.encoder.d_output) {
      throw ConfigError("teacher dim " + std::to_string(p.teacher->dim()) + " differs from encoder.d_output " +
                        std::to_string(config_.encoder.d_output));
    }
    p.templates = src.templates ? bridge::PromptTemplates::load(*src.templates) : bridge::PromptTemplates::defaults();
    p.templates.get("stage1");
    p.templates.get("instruct");
    p.instruct = src.instruct ? read_instruct(*src.instruct) : derived_instruct(p.manifest);
    prepared_ = std::move(p);
    return *prepared_;
  }

  // ------------------------------------------------------------ encoder

  encoder::SensorEncoder& encoder() {
    if (encoder_) return *encoder_;
    const fs::path ckpt = paths_.encoder / "checkpoint";
    if (skip(Stage::encoder, ckpt / "manifest.json")) {
      const ModelCheckpoint c = load_checkpoint(ckpt);
      encoder_ = encoder::SensorEncoder::from_checkpoint(c);
      require_architecture(c, encoder_config().to_json());
      encoder_id_ = checkpoint_id(c);
      return *encoder_;
    }
    const PreparedData& p = prepared();
    const auto train = encoder::alignment_samples(p.encoder_clips.train, *p.teacher);
    const auto val = encoder::alignment_samples(p.encoder_clips.validation, *p.teacher);
    note("encoder: aligning on " + std::to_string(train.size()) + " clips (" + std::to_string(val.size()) +
         " validation)");
    auto result = encoder::train_encoder(train, val, encoder_config(), config_.encoder.train, config_.seed);
    const ModelCheckpoint c = result.encoder.to_checkpoint(config_.seed);
    encoder_id_ = checkpoint_id(c);
    save_checkpoint(c, ckpt);
    io::atomic_write(paths_.encoder / "log.json", result.log.to_json().dump(2) + "\n");
    encoder_ = std::move(result.encoder);
    return *encoder_;
  }

  encoder::EncoderConfig encoder_config() {
    const PreparedData& p = prepared();
    encoder::EncoderConfig ec;
    ec.d_output = ec.teacher_dim = config_.encoder.d_output;
    for (auto m : config_.modalities) {
      auto mc = config_.encoder.modality;
      mc.channels = channels_of(p, m);
      ec.modalities[m] = mc;
    }
    return ec;
  }

  // ------------------------------------------------------------ decoder

  bridge::ToyDecoder& decoder() {
    if (decoder_) return *decoder_;
    const fs::path ckpt = paths_.decoder / "checkpoint";
    if (skip(Stage::decoder, ckpt / "manifest.json")) {
      const ModelCheckpoint c = load_checkpoint(ckpt);
      decoder_ = bridge::ToyDecoder::from_checkpoint(c, &config_.decoder.arch);
      decoder_id_ = checkpoint_id(c);
    } else {
      const PreparedData& p = prepared();
      const bridge::Vocabulary vocab = vocabulary(p);
      const auto corpus = lm_corpus(p, vocab);
      note("pretrain-lm: " + std::to_string(corpus.size()) + " examples, vocabulary " + std::to_string(vocab.size()));
      bridge::ToyDecoder dec(config_.decoder.arch, vocab, config_.seed);
      const TrainingLog log = bridge::pretrain_lm(dec, corpus, config_.decoder.train, config_.seed);
      const ModelCheckpoint c = dec.to_checkpoint(config_.seed);
      decoder_id_ = checkpoint_id(c);
      save_checkpoint(c, ckpt);
      io::atomic_write(paths_.decoder / "log.json", log.to_json().dump(2) + "\n");
      decoder_ = std::move(dec);
    }
    nn::set_trainable(decoder_->parameters(), false);
    return *decoder_;
  }

  // ------------------------------------------------------------ bridge

  /// Q-former after stage 1 (an untrained one under the no_stage1 ablation).
  bridge::QFormer& stage1() {
    if (stage1_) return *stage1_;
    const fs::path ckpt = paths_.stage1 / "checkpoint";
    const bridge::QFormerConfig qc = config_.qformer_config();
    bridge::ToyDecoder& dec = decoder();
    const ojson inputs = {{"encoder", encoder_id()}, {"decoder", decoder_id_}};
    if (skip(Stage::stage1, ckpt / "manifest.json")) {
      const ModelCheckpoint c = load_checkpoint(ckpt);
      if (c.manifest.value("inputs", ojson()) == inputs) {
        stage1_ = bridge::QFormer::from_checkpoint(c, &qc);
        stage1_id_ = checkpoint_id(c);
        return *stage1_;
      }
      note("stage1: encoder or decoder changed; retraining");
    }
    bridge::QFormer qf(qc, config_.seed);
    std::optional<TrainingLog> log;
    std::string stage_tag = "untrained";
    if (!config_.ablation.no_stage1) {
      const auto train = sensor_samples(prepared().decoder_clips.train);
      const auto val = sensor_samples(prepared().decoder_clips.validation);
      note("stage1: " + std::to_string(train.size()) + " captioned clips (" + std::to_string(val.size()) +
           " validation), " + std::to_string(config_.effective_segments()) + " temporal segments");
      bridge::BridgeSettings settings{config_.bridge.stage1, "stage1", config_.stage1_noise(), config_.bridge.max_len};
      log = bridge::train_stage1(qf, dec, prepared().templates, train, val, settings, config_.seed);
      stage_tag = "stage1";
    } else {
      note("stage1: skipped by the no_stage1 ablation; keeping the initial Q-former");
    }
    ModelCheckpoint c = qf.to_checkpoint(config_.seed, stage_tag, decoder_id_);
    c.manifest["inputs"] = inputs;
    c.manifest["temporal_segments"] = config_.effective_segments();
    stage1_id_ = checkpoint_id(c);
    save_checkpoint(c, ckpt);
    if (log) io::atomic_write(paths_.stage1 / "log.json", log->to_json().dump(2) + "\n");
    stage1_ = std::move(qf);
    return *stage1_;
  }

  /// Q-former after instruction tuning; the stage-1 model when stage 2 does
  /// not apply (no_stage1 ablation, or no instruction data).
  bridge::QFormer& stage2() {
    if (stage2_) return *stage2_;
    const fs::path ckpt = paths_.stage2 / "checkpoint";
    const bridge::QFormerConfig qc = config_.qformer_config();
    if (config_.ablation.no_stage1 || prepared().instruct.empty()) {
      bridge::QFormer& base = stage1();
      stage2_id_ = stage1_id_;
      if (prepared().instruct.empty()) note("stage2: no instruction data; skipped");
      return base;
    }
    bridge::QFormer qf = stage1();
    const bridge::ToyDecoder& dec = decoder();
    const ojson inputs = {{"stage1", stage1_id_}, {"decoder", decoder_id_}};
    if (skip(Stage::stage2, ckpt / "manifest.json")) {
      const ModelCheckpoint c = load_checkpoint(ckpt);
      if (c.manifest.value("inputs", ojson()) == inputs) {
        stage2_ = bridge::QFormer::from_checkpoint(c, &qc);
        stage2_id_ = checkpoint_id(c);
        return *stage2_;
      }
      note("stage2: stage-1 bridge changed; retraining");
    }
    const auto samples = instruct_samples();
    note("stage2: instruction tuning on " + std::to_string(samples.size()) + " teacher-space samples");
    bridge::BridgeSettings settings{config_.bridge.stage2, "instruct", config_.stage2_noise(), config_.bridge.max_len};
    const TrainingLog log = bridge::instruct_tune_stage2(qf, dec, prepared().templates, samples, settings, config_.seed);
    ModelCheckpoint c = qf.to_checkpoint(config_.seed, "stage2", stage1_id_);
    c.manifest["inputs"] = inputs;
    stage2_id_ = checkpoint_id(c);
    save_checkpoint(c, ckpt);
    io::atomic_write(paths_.stage2 / "log.json", log.to_json().dump(2) + "\n");
    stage2_ = std::move(qf);
    return *stage2_;
  }

  // ------------------------------------------------------------ generation and evaluation

  /// Captions for the decoder clips of one split part, keyed by clip id.
  /// Captioning uses the stage-1 Q-former: instruction tuning adapts the
  /// shared bridge to single teacher-space inputs and the question prompt.
  metrics::Candidates generate(const std::string& part) {
    const auto& clips = prepared().decoder_clips.get(part);
    bridge::QFormer& qf = stage1();
    const bridge::ToyDecoder& dec = decoder();
    metrics::Candidates out;
    for (const auto& s : sensor_samples(clips)) {
      out[s.item_id] = bridge::generate(qf, dec, prepared().templates, "stage1", s, config_.bridge.max_len);
    }
    return out;
  }

  metrics::References references(const std::string& part) {
    metrics::References out;
    for (const auto& c : prepared().decoder_clips.get(part)) out[c.clip_id] = {c.caption};
    return out;
  }

  /// Caption the test clips, score them, and answer the instruction set.
  metrics::EvalReport evaluate() {
    const fs::path report_file = paths_.eval / "report.json";
    stage1();
    stage2();
    if (skip(Stage::evaluate, report_file)) {
      auto report = metrics::EvalReport::from_json(json_io::load(report_file));
      const fs::path instruct_file = paths_.eval / "instruct.json";
      const bool instruct_current =
          !fs::exists(instruct_file) || json_io::load(instruct_file).value("checkpoint", "") == stage2_id_;
      if (report.meta.checkpoint == stage1_id_ && instruct_current) return report;
      note("evaluate: bridge changed; rescoring");
    }
    const auto candidates = generate("test");
    const auto refs = references("test");
    if (refs.empty()) throw InputError("the test split has no captioned clips to evaluate");
    note("evaluate: scoring " + std::to_string(refs.size()) + " test clips");
    const auto report = metrics::evaluate_corpus(candidates, refs, {config_.data.name, stage1_id_, "test"}, config_.metrics);
    io::atomic_write(paths_.eval / "candidates.jsonl", metrics::candidates_jsonl(candidates));
    io::atomic_write(paths_.eval / "references.jsonl", metrics::references_jsonl(refs));
    if (!prepared().instruct.empty()) io::atomic_write(paths_.eval / "instruct.json", json_io::dump_fixed(instruct_eval()));
    io::atomic_write(report_file, report.dump());
    return report;
  }

  /// Greedy answers to every instruction record with its teacher embedding.
  ojson instruct_eval() {
    bridge::QFormer& qf = stage2();
    const bridge::ToyDecoder& dec = decoder();
    ojson rows = ojson::array();
    std::size_t correct = 0;
    const auto samples = instruct_samples();
    for (const auto& s : samples) {
      const std::string answer = bridge::generate(qf, dec, prepared().templates, "instruct", s, config_.bridge.max_len);
      const bool ok = metrics::tokenize_caption(answer) == metrics::tokenize_caption(s.target);
      correct += ok ? 1 : 0;
      rows.push_back({{"item_id", s.item_id}, {"question", s.user_text}, {"answer", answer}, {"reference", s.target},
                      {"exact_match", ok}});
    }
    const double pct = samples.empty() ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
    return {{"checkpoint", stage2_id_}, {"item_count", samples.size()}, {"exact_match", json_io::quantize(pct)},
            {"items", rows}};
  }

  /// Every stage in order; returns the evaluation report.
  metrics::EvalReport run() {
    encoder();
    decoder();
    stage1();
    stage2();
    return evaluate();
  }

  // ------------------------------------------------------------ helpers shared with experiments

  bridge::Vocabulary vocabulary(const PreparedData& p) const {
    std::vector<std::string> texts = p.templates.texts();
    for (const auto& e : p.manifest.entries)
      if (!e.caption.empty()) texts.push_back(e.caption);
    for (const auto& r : p.instruct) texts.insert(texts.end(), {r.question, r.answer});
    return bridge::Vocabulary::build(texts);
  }

  /// Language-model corpus: training captions and instruction answers as
  /// plain sentences, plus (optionally) the same texts placed in the slots
  /// of the stage-1 and instruction prompts.
  std::vector<bridge::LmExample> lm_corpus(const PreparedData& p, const bridge::Vocabulary& vocab) const {
    std::set<std::string> texts;
    for (const auto& e : p.manifest.entries) {
      if (!e.caption.empty() && p.split.part_of(e.clip_id) == ingest::DatasetSplit::Part::train) texts.insert(e.caption);
    }
    for (const auto& r : p.instruct) texts.insert(r.answer);
    if (texts.empty()) throw InputError("pretrain-lm: no training captions or instruction answers");
    std::vector<bridge::LmExample> corpus;
    const std::size_t k = config_.bridge.qformer.queries;
    std::set<std::size_t> slot_counts{k, k * config_.bridge.temporal_segments};
    for (const auto& t : texts) {
      corpus.push_back(bridge::sentence_example(vocab, t));
      if (!config_.decoder.slotted_text) continue;
      for (std::size_t slots : slot_counts) {
        corpus.push_back(bridge::slotted_text_example(p.templates, "stage1", slots, "", t, vocab));
      }
    }
    if (config_.decoder.slotted_text) {
      for (const auto& r : p.instruct) {
        corpus.push_back(bridge::slotted_text_example(p.templates, "instruct", k, r.question, r.answer, vocab));
      }
    }
    return corpus;
  }

  /// Bridge samples for captioned clips: n time-ordered segment embeddings each.
  std::vector<bridge::BridgeSample> sensor_samples(const std::vector<ingest::ClipRecord>& clips) {
    const encoder::SensorEncoder& enc = encoder();
    std::vector<bridge::BridgeSample> out;
    out.reserve(clips.size());
    for (const auto& c : clips) {
      out.push_back({c.clip_id,
                     bridge::segment_embeddings(enc, encoder::encoder_input(c), config_.effective_segments(),
                                                config_.encoder_window_samples()),
                     "", c.caption});
    }
    return out;
  }

  /// Stage-2 samples: the teacher embedding as a single segment.
  std::vector<bridge::BridgeSample> instruct_samples() {
    const PreparedData& p = prepared();
    std::vector<bridge::BridgeSample> out;
    for (const auto& r : p.instruct) {
      out.push_back({r.teacher_key + "|" + r.question, {p.teacher->require(r.teacher_key)}, r.question, r.answer});
    }
    return out;
  }

  const std::string& encoder_id() {
    encoder();
    return encoder_id_;
  }

 private:
  bool skip(Stage s, const fs::path& artifact) {
    if (forced_.contains(s) || !fs::exists(artifact)) return false;
    note(std::string(to_string(s)) + ": up to date, skipped");
    return true;
  }

  void note(const std::string& msg) const {
    if (log_) log_(msg);
  }

  static double duration(const ingest::Recording& rec) {
    double d = INFINITY;
    for (const auto& [m, s] : rec.streams) d = std::min(d, static_cast<double>(s.samples()) / *s.rate_hz);
    return d;
  }

  static std::size_t channels_of(const PreparedData& p, ingest::Modality m) {
    for (const auto* parts : {&p.encoder_clips, &p.decoder_clips}) {
      for (const auto* v : {&parts->train, &parts->validation, &parts->test}) {
        for (const auto& c : *v) {
          if (const auto it = c.streams.find(m); it != c.streams.end()) return it->second.channels;
        }
      }
    }
    throw InputError("no clip carries modality " + std::string(ingest::to_string(m)));
  }

  std::vector<InstructRecord> derived_instruct(const ingest::Manifest& m) const {
    std::map<std::string, std::string> labels;
    for (const auto& e : m.entries)
      if (e.teacher_key) labels.emplace(*e.teacher_key, e.label);
    std::vector<InstructRecord> out;
    for (const auto& [key, label] : labels) {
      for (const auto& q : config_.data.synthetic.questions) out.push_back({key, q, bridge::rephrase_label(label)});
    }
    return out;
  }

  void write_clip_summary(const PreparedData& p) const {
    auto counts = [](const Parts<ingest::ClipRecord>& parts) {
      return ojson{{"train", parts.train.size()}, {"validation", parts.validation.size()}, {"test", parts.test.size()}};
    };
    const ojson summary = {{"entries", p.manifest.entries.size()},
                           {"encoder_clips", counts(p.encoder_clips)},
                           {"decoder_clips", counts(p.decoder_clips)}};
    const fs::path file = paths_.preprocess / "clips.json";
    const std::string text = summary.dump(2) + "\n";
    if (!fs::exists(file) || io::read_file(file) != text) io::atomic_write(file, text);
  }

  RunConfig config_;
  StagePaths paths_;
  std::set<Stage> forced_;
  Logger log_;

  std::optional<PreparedData> prepared_;
  std::optional<encoder::SensorEncoder> encoder_;
  std::optional<bridge::ToyDecoder> decoder_;
  std::optional<bridge::QFormer> stage1_;
  std::optional<bridge::QFormer> stage2_;
  std::string encoder_id_, decoder_id_, stage1_id_, stage2_id_;
};

}  // namespace s2t::pipeline
