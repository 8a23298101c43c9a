#pragma once

// Corpus evaluation: pairs model outputs with references by item id, scores
// every metric, and serializes the result as a fixed-order JSON report.
// Scores are x100 (BLEU, ROUGE-L, METEOR, exact match in [0, 100]; CIDEr-D
// in [0, 1000]); `cider_raw` keeps CIDEr-D on its conventional scale.
// All numbers are quantized to 4 fractional digits when the report is built.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/error.hpp"
#include "s2t/json_io.hpp"
#include "s2t/metrics/metrics.hpp"

namespace s2t::metrics {

struct MetricSettings {
  double rouge_beta = 1.2;
  double cider_sigma = 6.0;

  void validate() const {
    if (!(rouge_beta > 0.0)) throw ConfigError("metrics.rouge_beta must be positive");
    if (!(cider_sigma > 0.0)) throw ConfigError("metrics.cider_sigma must be positive");
  }
  nlohmann::ordered_json to_json() const { return {{"rouge_beta", rouge_beta}, {"cider_sigma", cider_sigma}}; }
  static MetricSettings from_json(const nlohmann::json& j) { return from_json(j, MetricSettings{}); }
  static MetricSettings from_json(const nlohmann::json& j, MetricSettings s) {
    s.rouge_beta = j.value("rouge_beta", s.rouge_beta);
    s.cider_sigma = j.value("cider_sigma", s.cider_sigma);
    return s;
  }
};

struct CorpusScores {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge_l = 0, meteor = 0, cider = 0, cider_raw = 0, exact_match = 0;
  bool operator==(const CorpusScores&) const = default;
};

struct ItemScores {
  std::string item_id;
  std::string candidate;
  std::vector<std::string> references;
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge_l = 0, meteor = 0, cider = 0;
  bool exact_match = false;
  bool operator==(const ItemScores&) const = default;
};

struct ReportMeta {
  std::string dataset;
  std::string checkpoint;
  std::string split;
  bool operator==(const ReportMeta&) const = default;
};

struct EvalReport {
  ReportMeta meta;
  CorpusScores scores;
  std::vector<ItemScores> items;

  bool operator==(const EvalReport&) const = default;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["dataset"] = meta.dataset;
    j["checkpoint"] = meta.checkpoint;
    j["split"] = meta.split;
    j["item_count"] = items.size();
    j["scores"] = {{"bleu1", scores.bleu1},   {"bleu2", scores.bleu2},         {"bleu3", scores.bleu3},
                   {"bleu4", scores.bleu4},   {"rouge_l", scores.rouge_l},     {"meteor", scores.meteor},
                   {"cider", scores.cider},   {"cider_raw", scores.cider_raw}, {"spice", nullptr},
                   {"exact_match", scores.exact_match}};
    j["metric_variants"] = {{"meteor", "meteor_lite"}, {"cider", "cider_d"}};
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& it : items) {
      rows.push_back({{"item_id", it.item_id},
                      {"candidate", it.candidate},
                      {"references", it.references},
                      {"bleu1", it.bleu1},
                      {"bleu2", it.bleu2},
                      {"bleu3", it.bleu3},
                      {"bleu4", it.bleu4},
                      {"rouge_l", it.rouge_l},
                      {"meteor", it.meteor},
                      {"cider", it.cider},
                      {"exact_match", it.exact_match}});
    }
    j["items"] = std::move(rows);
    return j;
  }

  /// Serialized form: fixed key order, 4 fractional digits.
  std::string dump() const { return json_io::dump_fixed(to_json()); }

  static EvalReport from_json(const nlohmann::json& j) {
    try {
      EvalReport r;
      r.meta = {j.at("dataset").get<std::string>(), j.at("checkpoint").get<std::string>(),
                j.at("split").get<std::string>()};
      const auto& s = j.at("scores");
      r.scores = {s.at("bleu1").get<double>(),   s.at("bleu2").get<double>(),     s.at("bleu3").get<double>(),
                  s.at("bleu4").get<double>(),   s.at("rouge_l").get<double>(),   s.at("meteor").get<double>(),
                  s.at("cider").get<double>(),   s.at("cider_raw").get<double>(), s.at("exact_match").get<double>()};
      for (const auto& row : j.at("items")) {
        ItemScores it;
        it.item_id = row.at("item_id").get<std::string>();
        it.candidate = row.at("candidate").get<std::string>();
        it.references = row.at("references").get<std::vector<std::string>>();
        it.bleu1 = row.at("bleu1").get<double>();
        it.bleu2 = row.at("bleu2").get<double>();
        it.bleu3 = row.at("bleu3").get<double>();
        it.bleu4 = row.at("bleu4").get<double>();
        it.rouge_l = row.at("rouge_l").get<double>();
        it.meteor = row.at("meteor").get<double>();
        it.cider = row.at("cider").get<double>();
        it.exact_match = row.at("exact_match").get<bool>();
        r.items.push_back(std::move(it));
      }
      if (j.at("item_count").get<std::size_t>() != r.items.size()) throw CorruptionError("report item_count mismatch");
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(std::string("malformed report: ") + e.what());
    }
  }
};

using Candidates = std::map<std::string, std::string>;
using References = std::map<std::string, std::vector<std::string>>;

/// Score model outputs against references; both must cover the same item ids.
inline EvalReport evaluate_corpus(const Candidates& candidates, const References& references, const ReportMeta& meta,
                                  const MetricSettings& settings = {}) {
  settings.validate();
  for (const auto& [id, c] : candidates) {
    if (!references.contains(id)) throw InputError("no references for item '" + id + "'");
  }
  for (const auto& [id, r] : references) {
    if (!candidates.contains(id)) throw InputError("no model output for item '" + id + "'");
    if (r.empty()) throw InputError("item '" + id + "' has an empty reference list");
  }
  if (candidates.empty()) throw InputError("evaluation corpus is empty");
  if (candidates.size() < 2) throw InputError("evaluation needs at least two items (CIDEr-D document frequencies)");

  std::vector<CaptionPair> pairs;
  for (const auto& [id, c] : candidates) {
    CaptionPair p{id, tokenize_caption(c), {}};
    for (const auto& r : references.at(id)) p.references.push_back(tokenize_caption(r));
    pairs.push_back(std::move(p));
  }

  const auto q = [](double v) { return json_io::quantize(v); };
  EvalReport report;
  report.meta = meta;
  const auto b = bleu(pairs, 4);
  const auto cider_per_item = cider_items(pairs, 4, settings.cider_sigma);
  const double cider_corpus = cider(pairs, 4, settings.cider_sigma);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const CaptionPair& p = pairs[i];
    ItemScores it;
    it.item_id = p.item_id;
    it.candidate = candidates.at(p.item_id);
    it.references = references.at(p.item_id);
    const auto sb = sentence_bleu(p, 4);
    it.bleu1 = q(sb[0]);
    it.bleu2 = q(sb[1]);
    it.bleu3 = q(sb[2]);
    it.bleu4 = q(sb[3]);
    it.rouge_l = q(100.0 * rouge_l_item(p, settings.rouge_beta));
    it.meteor = q(100.0 * meteor_item(p));
    it.cider = q(100.0 * cider_per_item[i]);
    it.exact_match = std::find(p.references.begin(), p.references.end(), p.candidate) != p.references.end();
    exact += it.exact_match ? 1 : 0;
    report.items.push_back(std::move(it));
  }
  report.scores = {q(b[0]),
                   q(b[1]),
                   q(b[2]),
                   q(b[3]),
                   q(rouge_l(pairs, settings.rouge_beta)),
                   q(meteor_lite(pairs)),
                   q(100.0 * cider_corpus),
                   q(cider_corpus),
                   q(100.0 * static_cast<double>(exact) / static_cast<double>(pairs.size()))};
  return report;
}

// ---------------------------------------------------------------- JSON Lines inputs

inline Candidates read_candidates(const std::filesystem::path& p) {
  Candidates out;
  for (const auto& j : json_io::read_jsonl(p)) {
    const std::string id = json_io::require_string(j, "item_id", p.string());
    if (!out.emplace(id, json_io::require_string(j, "candidate", p.string())).second) {
      throw InputError(p.string() + ": duplicate item_id '" + id + "'");
    }
  }
  return out;
}

inline References read_references(const std::filesystem::path& p) {
  References out;
  for (const auto& j : json_io::read_jsonl(p)) {
    const std::string id = json_io::require_string(j, "item_id", p.string());
    if (!j.contains("references") || !j["references"].is_array() || j["references"].empty()) {
      throw InputError(p.string() + ": item '" + id + "' needs a non-empty 'references' array");
    }
    std::vector<std::string> refs;
    for (const auto& r : j["references"]) {
      if (!r.is_string()) throw InputError(p.string() + ": item '" + id + "' has a non-string reference");
      refs.push_back(r.get<std::string>());
    }
    if (!out.emplace(id, std::move(refs)).second) throw InputError(p.string() + ": duplicate item_id '" + id + "'");
  }
  return out;
}

inline std::string candidates_jsonl(const Candidates& c) {
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& [id, text] : c) rows.push_back({{"item_id", id}, {"candidate", text}});
  return json_io::to_jsonl(rows);
}

inline std::string references_jsonl(const References& r) {
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& [id, refs] : r) rows.push_back({{"item_id", id}, {"references", refs}});
  return json_io::to_jsonl(rows);
}

}  // namespace s2t::metrics
