#pragma once

// Word-level text handling for the toy decoder: a case-preserving word
// splitter that peels punctuation into separate tokens and keeps prompt
// markers such as [INST] and <<SYS>> atomic, the frozen vocabulary, and the
// deterministic label -> caption rephrasing table.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "s2t/error.hpp"

namespace s2t::bridge {

namespace detail {

inline bool is_peelable(char c) {
  return c == '.' || c == ',' || c == ':' || c == ';' || c == '!' || c == '?' || c == '"' || c == '(' || c == ')';
}

inline bool is_marker(std::string_view w) {
  return w.size() >= 3 && ((w.front() == '[' && w.back() == ']') || (w.starts_with("<<") && w.ends_with(">>")));
}

}  // namespace detail

/// Split on whitespace; leading and trailing punctuation become their own tokens.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;
    if (detail::is_marker(chunk)) {
      out.emplace_back(chunk);
      continue;
    }
    std::size_t lead = 0;
    while (lead < chunk.size() && detail::is_peelable(chunk[lead])) ++lead;
    std::size_t trail = chunk.size();
    while (trail > lead && detail::is_peelable(chunk[trail - 1])) --trail;
    for (std::size_t k = 0; k < lead; ++k) out.emplace_back(1, chunk[k]);
    if (trail > lead) out.emplace_back(chunk.substr(lead, trail - lead));
    for (std::size_t k = trail; k < chunk.size(); ++k) out.emplace_back(1, chunk[k]);
  }
  return out;
}

/// Inverse of split_words for ordinary sentences: closing punctuation attaches
/// to the preceding word.
inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  bool after_open = false;
  for (const auto& w : words) {
    const bool closing = w.size() == 1 && (w == "." || w == "," || w == ":" || w == ";" || w == "!" || w == "?" || w == ")");
    if (!out.empty() && !closing && !after_open) out += ' ';
    out += w;
    after_open = w == "(";
  }
  return out;
}

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  Vocabulary() : words_{"<pad>", "<bos>", "<eos>", "<unk>"} { reindex(); }

  /// Vocabulary over every word of `texts`, in sorted order after the specials.
  static Vocabulary build(const std::vector<std::string>& texts) {
    std::set<std::string> seen;
    for (const auto& t : texts)
      for (auto& w : split_words(t)) seen.insert(std::move(w));
    Vocabulary v;
    for (const auto& w : seen)
      if (!v.index_.contains(w)) v.words_.push_back(w);
    v.reindex();
    return v;
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const {
    if (id >= words_.size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    return words_[id];
  }
  std::optional<std::size_t> find(const std::string& w) const {
    const auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& w) const { return index_.contains(w); }

  /// Token ids for `text`; out-of-vocabulary words are an error.
  std::vector<std::size_t> encode(std::string_view text) const {
    std::vector<std::size_t> ids;
    for (const auto& w : split_words(text)) {
      const auto id = find(w);
      if (!id) throw InputError("word '" + w + "' is not in the vocabulary");
      ids.push_back(*id);
    }
    return ids;
  }

  /// Words for ids, stopping at EOS and skipping other specials.
  std::string decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    for (std::size_t id : ids) {
      if (id == kEos) break;
      if (id == kPad || id == kBos || id == kUnk) continue;
      out.push_back(word(id));
    }
    return join_words(out);
  }

  nlohmann::ordered_json to_json() const { return words_; }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    const auto words = j.get<std::vector<std::string>>();
    if (words.size() < 4 || words[0] != "<pad>" || words[1] != "<bos>" || words[2] != "<eos>" || words[3] != "<unk>") {
      throw CorruptionError("vocabulary must start with <pad>, <bos>, <eos>, <unk>");
    }
    v.words_ = words;
    v.reindex();
    if (v.index_.size() != v.words_.size()) throw CorruptionError("vocabulary has duplicate words");
    return v;
  }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------- rephrasing

namespace detail {

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

inline std::size_t vowel_groups(std::string_view w) {
  std::size_t groups = 0;
  bool in_group = false;
  for (char c : w) {
    const bool v = is_vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  return groups;
}

}  // namespace detail

/// Present participle of an English verb by the usual spelling rules.
inline std::string gerund(std::string verb) {
  if (verb.empty()) return verb;
  const std::size_t n = verb.size();
  if (verb.ends_with("ie")) return verb.substr(0, n - 2) + "ying";
  if (verb.ends_with("ing")) return verb;
  if (n > 2 && verb.back() == 'e' && !verb.ends_with("ee") && !verb.ends_with("ye") && !verb.ends_with("oe")) {
    return verb.substr(0, n - 1) + "ing";
  }
  // Single-syllable consonant-vowel-consonant words double the final consonant.
  if (n >= 3 && detail::vowel_groups(verb) == 1 && !detail::is_vowel(verb[n - 1]) && detail::is_vowel(verb[n - 2]) &&
      !detail::is_vowel(verb[n - 3]) && verb.back() != 'w' && verb.back() != 'x' && verb.back() != 'y') {
    return verb + verb.back() + "ing";
  }
  return verb + "ing";
}

/// Rephrase an activity label ("peel_cucumber") into a caption
/// ("A person is peeling a cucumber."). Entries of `overrides` win.
inline std::string rephrase_label(const std::string& label, const std::map<std::string, std::string>& overrides = {}) {
  if (const auto it = overrides.find(label); it != overrides.end()) return it->second;
  std::vector<std::string> parts;
  std::string cur;
  for (char c : label) {
    if (c == '_' || c == ' ' || c == '-') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  if (parts.empty()) throw std::invalid_argument("rephrase_label: empty label");
  std::string out = "A person is " + gerund(parts[0]);
  if (parts.size() > 1) {
    const std::string& noun = parts.back();
    const bool plural = noun.size() > 2 && noun.back() == 's' && !noun.ends_with("ss");
    const std::set<std::string> determiners{"a", "an", "the", "some", "his", "her", "their", "to", "with", "on", "in", "up", "down", "out", "off"};
    if (!plural && !determiners.contains(parts[1])) out += detail::is_vowel(parts[1][0]) ? " an" : " a";
    for (std::size_t i = 1; i < parts.size(); ++i) out += " " + parts[i];
  }
  return out + ".";
}

}  // namespace s2t::bridge
