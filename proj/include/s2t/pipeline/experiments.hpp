#pragma once

// Experiment harness: several pipeline runs under one output directory,
// sharing every upstream stage that does not depend on the condition, and
// summarized as a comparison table (aligned text and JSON).
//   ablate        - full model vs. w/o temporal tokens, w/o noise, w/o stage-1 training;
//   holdout modality - each single modality vs. all configured modalities;
//   holdout subject  - seen users (uniform split) vs. unseen users (by-subject split).

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "s2t/pipeline/stages.hpp"

namespace s2t::pipeline {

struct TableRow {
  std::string condition;
  std::string description;
  std::size_t item_count = 0;
  metrics::CorpusScores scores;
};

struct ComparisonTable {
  std::string title;
  std::vector<TableRow> rows;

  const TableRow& row(const std::string& condition) const {
    for (const auto& r : rows)
      if (r.condition == condition) return r;
    throw std::out_of_range("no table row '" + condition + "'");
  }

  ojson to_json() const {
    ojson rows_json = ojson::array();
    for (const auto& r : rows) {
      const auto& s = r.scores;
      rows_json.push_back({{"condition", r.condition},
                           {"description", r.description},
                           {"item_count", r.item_count},
                           {"bleu1", s.bleu1},
                           {"bleu2", s.bleu2},
                           {"bleu3", s.bleu3},
                           {"bleu4", s.bleu4},
                           {"rouge_l", s.rouge_l},
                           {"meteor", s.meteor},
                           {"cider", s.cider},
                           {"cider_raw", s.cider_raw},
                           {"spice", nullptr},
                           {"exact_match", s.exact_match}});
    }
    return {{"title", title}, {"rows", rows_json}};
  }

  /// Aligned plain-text rendering, scores with two decimals.
  std::string to_text() const {
    const std::vector<std::string> head{"condition", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L",
                                        "METEOR",    "CIDEr",  "SPICE",  "Exact"};
    std::vector<std::vector<std::string>> cells{head};
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      return std::string(buf);
    };
    for (const auto& r : rows) {
      const auto& s = r.scores;
      cells.push_back({r.description, num(s.bleu1), num(s.bleu2), num(s.bleu3), num(s.bleu4), num(s.rouge_l),
                       num(s.meteor), num(s.cider), "-", num(s.exact_match)});
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& line : cells)
      for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    std::string out = title + "\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::string line;
      for (std::size_t c = 0; c < cells[i].size(); ++c) {
        const std::string& v = cells[i][c];
        const std::string pad(width[c] - v.size(), ' ');
        line += c == 0 ? v + pad : "  " + pad + v;  // first column left-aligned, numbers right-aligned
      }
      out += line + "\n";
      if (i == 0) {
        std::size_t total = 0;
        for (std::size_t w : width) total += w;
        out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
      }
    }
    return out;
  }

  void write(const fs::path& dir, const std::string& stem) const {
    io::atomic_write(dir / (stem + ".json"), json_io::dump_fixed(to_json()));
    io::atomic_write(dir / (stem + ".txt"), to_text());
  }
};

struct ExperimentOptions {
  bool force = false;
  Pipeline::Logger log;
};

namespace detail {

inline std::set<Stage> forced(bool force, std::initializer_list<Stage> stages) {
  return force ? std::set<Stage>(stages) : std::set<Stage>{};
}

inline Pipeline::Logger prefixed(const Pipeline::Logger& log, const std::string& prefix) {
  if (!log) return {};
  return [log, prefix](const std::string& m) { log("[" + prefix + "] " + m); };
}

inline TableRow table_row(std::string condition, std::string description, const metrics::EvalReport& r) {
  return {std::move(condition), std::move(description), r.items.size(), r.scores};
}

}  // namespace detail

// ---------------------------------------------------------------- ablation

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "no_temporal", "no_noise", "no_stage1"};
  return v;
}

inline std::string describe_variant(const std::string& v) {
  if (v == "full") return "full model";
  if (v == "no_temporal") return "w/o temporal tokens";
  if (v == "no_noise") return "w/o noise injection";
  if (v == "no_stage1") return "w/o stage-1 training";
  throw ConfigError("unknown ablation variant '" + v + "' (expected full, no_temporal, no_noise or no_stage1)");
}

/// The base config with one ablation flag set.
inline RunConfig apply_variant(RunConfig c, const std::string& v) {
  describe_variant(v);
  c.ablation = {};
  c.ablation.no_temporal = v == "no_temporal";
  c.ablation.no_noise = v == "no_noise";
  c.ablation.no_stage1 = v == "no_stage1";
  return c;
}

/// One run per variant with the same seed, data, split, encoder and decoder.
/// The full model always forms the first row.
inline ComparisonTable ablate(const RunConfig& base, const std::vector<std::string>& variants, const fs::path& out,
                              const ExperimentOptions& opt = {}) {
  std::vector<std::string> rows{"full"};
  for (const auto& v : variants) {
    describe_variant(v);
    if (std::find(rows.begin(), rows.end(), v) == rows.end()) rows.push_back(v);
  }
  RunConfig shared_config = apply_variant(base, "full");
  const fs::path shared = out / "shared";
  claim_output_dir(shared_config, shared, opt.force);
  Pipeline upstream(shared_config, StagePaths::under(shared),
                    detail::forced(opt.force, {Stage::data, Stage::preprocess, Stage::encoder, Stage::decoder}),
                    detail::prefixed(opt.log, "shared"));
  upstream.encoder();
  upstream.decoder();

  ComparisonTable table{"Ablation study (test split)", {}};
  for (const auto& v : rows) {
    const RunConfig cfg = apply_variant(base, v);
    const fs::path dir = out / "variants" / v;
    claim_output_dir(cfg, dir, opt.force);
    StagePaths paths = StagePaths::under(shared);
    paths.stage1 = dir / "stage1";
    paths.stage2 = dir / "stage2";
    paths.eval = dir / "eval";
    Pipeline p(cfg, paths, detail::forced(opt.force, {Stage::stage1, Stage::stage2, Stage::evaluate}),
               detail::prefixed(opt.log, v));
    table.rows.push_back(detail::table_row(v, describe_variant(v), p.run()));
  }
  table.write(out, "ablation");
  return table;
}

// ---------------------------------------------------------------- holdout

enum class HoldoutDimension { modality, subject };

inline HoldoutDimension parse_holdout_dimension(std::string_view s) {
  if (s == "modality") return HoldoutDimension::modality;
  if (s == "subject") return HoldoutDimension::subject;
  throw ConfigError("unknown holdout dimension '" + std::string(s) + "' (expected modality or subject)");
}

/// Modality rows: one encoder per single modality plus one over all of
/// them; data, split, stats and decoder are shared. Subject rows: the same
/// pipeline under a uniform split (seen users) and a by-subject split
/// (unseen users).
/// Requirements checkable from the config alone (the subject count of an
/// external manifest is checked once it is loaded).
inline void check_holdout(const RunConfig& base, HoldoutDimension dim) {
  if (dim == HoldoutDimension::modality && base.modalities.size() < 2) {
    throw ConfigError("modality holdout needs at least two configured modalities");
  }
  if (dim == HoldoutDimension::subject && !base.data.manifest && base.data.synthetic.subjects < 3) {
    throw ConfigError("subject holdout needs at least 3 subjects, the synthetic dataset has " +
                      std::to_string(base.data.synthetic.subjects));
  }
}

inline ComparisonTable holdout(const RunConfig& base, HoldoutDimension dim, const fs::path& out,
                               const ExperimentOptions& opt = {}) {
  check_holdout(base, dim);
  const fs::path shared = out / "shared";
  claim_output_dir(base, shared, opt.force);
  Pipeline upstream(base, StagePaths::under(shared), detail::forced(opt.force, {Stage::data, Stage::preprocess, Stage::decoder}),
                    detail::prefixed(opt.log, "shared"));

  if (dim == HoldoutDimension::modality) {
    upstream.decoder();  // also materializes the shared split and stats
    std::vector<std::pair<std::string, std::vector<ingest::Modality>>> conditions;
    std::string all_name;
    for (auto m : base.modalities) {
      conditions.push_back({std::string(ingest::to_string(m)), {m}});
      all_name += (all_name.empty() ? "" : "+") + std::string(ingest::to_string(m));
    }
    conditions.push_back({all_name, base.modalities});

    ComparisonTable table{"Modality holdout (test split)", {}};
    for (const auto& [name, mods] : conditions) {
      RunConfig cfg = base;
      cfg.modalities = mods;
      const fs::path dir = out / "rows" / name;
      claim_output_dir(cfg, dir, opt.force);
      StagePaths paths = StagePaths::under(dir);
      paths.data = shared / "data";
      paths.preprocess = shared / "preprocess";
      paths.decoder = shared / "decoder";
      Pipeline p(cfg, paths, detail::forced(opt.force, {Stage::encoder, Stage::stage1, Stage::stage2, Stage::evaluate}),
                 detail::prefixed(opt.log, name));
      std::string description;
      for (auto m : mods) description += (description.empty() ? "" : ", ") + std::string(ingest::to_string(m));
      if (mods.size() == 1) description += " only";
      table.rows.push_back(detail::table_row(name, description, p.run()));
    }
    table.write(out, "holdout_modality");
    return table;
  }

  const ingest::Manifest manifest = ingest::load_manifest(upstream.data().manifest);
  std::set<std::string> subjects;
  for (const auto& e : manifest.entries) subjects.insert(e.subject_id);
  if (subjects.size() < 3) {
    throw ConfigError("subject holdout needs at least 3 subjects, found " + std::to_string(subjects.size()));
  }
  ComparisonTable table{"Subject holdout (test split)", {}};
  const std::vector<std::tuple<std::string, std::string, ingest::SplitMode>> conditions{
      {"seen_users", "seen users (uniform split)", ingest::SplitMode::uniform},
      {"unseen_users", "unseen users (by-subject split)", ingest::SplitMode::by_subject}};
  for (const auto& [name, description, mode] : conditions) {
    RunConfig cfg = base;
    cfg.split.mode = mode;
    const fs::path dir = out / "rows" / name;
    claim_output_dir(cfg, dir, opt.force);
    StagePaths paths = StagePaths::under(dir);
    paths.data = shared / "data";
    Pipeline p(cfg, paths,
               detail::forced(opt.force, {Stage::preprocess, Stage::encoder, Stage::decoder, Stage::stage1,
                                          Stage::stage2, Stage::evaluate}),
               detail::prefixed(opt.log, name));
    table.rows.push_back(detail::table_row(name, description, p.run()));
  }
  table.write(out, "holdout_subject");
  return table;
}

}  // namespace s2t::pipeline
