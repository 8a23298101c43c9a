#pragma once

// Prompt templates and the mixed token/embedding sequences fed to the
// decoder. Layout:
//   [INST] <<SYS>> {system} <</SYS>> {pre_sensor_text} <slots>{post_sensor_text} {user_text} [/INST]

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/bridge/text.hpp"
#include "s2t/checkpoint.hpp"
#include "s2t/error.hpp"
#include "s2t/numerics/autodiff.hpp"

namespace s2t::bridge {

struct PromptTemplate {
  std::string system;
  std::string pre_sensor_text;
  std::string post_sensor_text;
  bool requires_user_text = false;

  bool operator==(const PromptTemplate&) const = default;
};

inline constexpr std::string_view kSystemPrompt =
    "You are a helpful language and vision assistant. You are able to understand the visual content that the user "
    "provides, and assist the user with a variety of tasks using natural language.";

class PromptTemplates {
 public:
  /// The captioning and instruction templates used by the two bridge stages.
  static PromptTemplates defaults() {
    PromptTemplates t;
    t.templates_["stage1"] = {std::string(kSystemPrompt), "Open your eyes and imagine you see:",
                              ". Provide a brief description of the scene.", false};
    t.templates_["instruct"] = {std::string(kSystemPrompt), "", "", true};
    return t;
  }

  static PromptTemplates from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.empty()) throw ConfigError("prompt templates must be a non-empty JSON object");
    PromptTemplates t;
    for (const auto& [id, v] : j.items()) {
      if (!v.is_object() || !v.contains("system") || !v.contains("pre_sensor_text") || !v.contains("post_sensor_text")) {
        throw ConfigError("prompt template '" + id + "' needs system, pre_sensor_text and post_sensor_text");
      }
      t.templates_[id] = {v["system"].get<std::string>(), v["pre_sensor_text"].get<std::string>(),
                          v["post_sensor_text"].get<std::string>(), v.value("requires_user_text", false)};
    }
    return t;
  }

  static PromptTemplates load(const std::filesystem::path& p) {
    try {
      return from_json(nlohmann::json::parse(io::read_file(p)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(p.string() + ": " + e.what());
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [id, t] : templates_) {
      j[id] = {{"system", t.system},
               {"pre_sensor_text", t.pre_sensor_text},
               {"post_sensor_text", t.post_sensor_text},
               {"requires_user_text", t.requires_user_text}};
    }
    return j;
  }

  const PromptTemplate& get(const std::string& id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) throw ConfigError("unknown prompt template '" + id + "'");
    return it->second;
  }

  /// Every fixed string, so the decoder vocabulary can cover the prompts.
  std::vector<std::string> texts() const {
    std::vector<std::string> out{"[INST] <<SYS>> <</SYS>> [/INST]"};
    for (const auto& [id, t] : templates_) out.insert(out.end(), {t.system, t.pre_sensor_text, t.post_sensor_text});
    return out;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

/// One decoder input position: a vocabulary token or a sensor slot.
struct PromptItem {
  bool is_slot = false;
  std::size_t index = 0;  // token id, or row of TokenSequence::slots
};

struct TokenSequence {
  std::vector<PromptItem> items;
  ad::Var slots;  // slot_count x d_model; unset when there are no slots

  std::size_t size() const { return items.size(); }
  std::size_t slot_count() const {
    return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const PromptItem& i) { return i.is_slot; }));
  }
  /// Index of the first slot position (size() when there is none).
  std::size_t first_slot() const {
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].is_slot) return i;
    return items.size();
  }
  void push_tokens(const std::vector<std::size_t>& ids) {
    for (std::size_t id : ids) items.push_back({false, id});
  }
};

/// Lay out a template around `slot_count` sensor slots whose values are `sensor_tokens`.
inline TokenSequence build_prompt(const PromptTemplates& templates, const std::string& template_id,
                                  const ad::Var& sensor_tokens, const std::string& user_text, const Vocabulary& vocab) {
  const PromptTemplate& t = templates.get(template_id);
  if (t.requires_user_text && user_text.empty()) {
    throw std::invalid_argument("prompt template '" + template_id + "' requires user text");
  }
  if (!sensor_tokens.valid() || sensor_tokens.rows() == 0) throw std::invalid_argument("build_prompt: no sensor tokens");
  TokenSequence seq;
  seq.slots = sensor_tokens;
  seq.push_tokens(vocab.encode("[INST] <<SYS>> " + t.system + " <</SYS>> " + t.pre_sensor_text));
  for (std::size_t s = 0; s < sensor_tokens.rows(); ++s) seq.items.push_back({true, s});
  seq.push_tokens(vocab.encode(t.post_sensor_text + " " + user_text + " [/INST]"));
  return seq;
}

}  // namespace s2t::bridge
