#pragma once

// Corpus-level captioning metrics over tokenized caption pairs: BLEU-1..n,
// ROUGE-L, METEOR-lite (exact + Porter-stem matching) and CIDEr-D.
// Corpus means are taken over per-item scores in sorted order, so every
// metric is exactly invariant to the order of the corpus.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "s2t/metrics/porter.hpp"

namespace s2t::metrics {

using Tokens = std::vector<std::string>;

struct CaptionPair {
  std::string item_id;
  Tokens candidate;
  std::vector<Tokens> references;
};

/// Lowercase, drop ASCII punctuation, split on whitespace.
inline Tokens tokenize_caption(std::string_view text) {
  Tokens out;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else if (!(c < 128 && std::ispunct(c))) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

namespace detail {

inline void require_corpus(const std::vector<CaptionPair>& pairs, const char* metric) {
  if (pairs.empty()) throw std::invalid_argument(std::string(metric) + ": empty corpus");
  for (const auto& p : pairs) {
    if (p.references.empty()) {
      throw std::invalid_argument(std::string(metric) + ": item '" + p.item_id + "' has no reference");
    }
  }
}

using NgramCounts = std::map<Tokens, std::size_t>;

inline NgramCounts ngram_counts(const Tokens& t, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

/// Mean of per-item values, summed in ascending order.
inline double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

struct BleuStats {
  std::vector<std::size_t> matched;
  std::vector<std::size_t> total;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

inline void accumulate_bleu(const CaptionPair& p, std::size_t max_n, BleuStats& s) {
  for (std::size_t n = 1; n <= max_n; ++n) {
    const NgramCounts cand = ngram_counts(p.candidate, n);
    std::map<Tokens, std::size_t> max_ref;
    for (const auto& r : p.references)
      for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    for (const auto& [g, c] : cand) {
      const auto it = max_ref.find(g);
      s.matched[n - 1] += std::min(c, it == max_ref.end() ? std::size_t{0} : it->second);
      s.total[n - 1] += c;
    }
  }
  // Closest reference length; the shorter one wins a tie.
  const std::size_t c = p.candidate.size();
  std::size_t best = p.references.front().size();
  for (const auto& r : p.references) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  s.candidate_length += c;
  s.reference_length += best;
}

/// Cumulative BLEU-1..max_n (x100). `epsilon` > 0 replaces zero precisions.
inline std::vector<double> bleu_from_stats(const BleuStats& s, double epsilon) {
  const std::size_t max_n = s.matched.size();
  std::vector<double> out(max_n, 0.0);
  if (s.candidate_length == 0) return out;
  const double c = static_cast<double>(s.candidate_length);
  const double r = static_cast<double>(s.reference_length);
  const double bp = s.candidate_length < s.reference_length ? std::exp(1.0 - r / c) : 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < max_n; ++n) {
    double p = s.total[n] == 0 ? 0.0 : static_cast<double>(s.matched[n]) / static_cast<double>(s.total[n]);
    if (p == 0.0) {
      if (epsilon > 0.0) {
        p = epsilon;
      } else {
        zero = true;
      }
    }
    if (!zero) log_sum += std::log(p);
    out[n] = zero ? 0.0 : 100.0 * bp * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return out;
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

// ---------------------------------------------------------------- BLEU

/// Corpus BLEU-1..max_n (x100): clipped n-gram precision summed over the
/// corpus, geometric mean, brevity penalty against closest reference lengths.
inline std::vector<double> bleu(const std::vector<CaptionPair>& pairs, std::size_t max_n = 4) {
  detail::require_corpus(pairs, "bleu");
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be at least 1");
  detail::BleuStats s{std::vector<std::size_t>(max_n, 0), std::vector<std::size_t>(max_n, 0)};
  for (const auto& p : pairs) detail::accumulate_bleu(p, max_n, s);
  return detail::bleu_from_stats(s, 0.0);
}

/// Sentence BLEU-1..max_n (x100) with zero precisions replaced by 1e-9.
inline std::vector<double> sentence_bleu(const CaptionPair& pair, std::size_t max_n = 4) {
  detail::require_corpus({pair}, "sentence_bleu");
  if (max_n == 0) throw std::invalid_argument("sentence_bleu: max_n must be at least 1");
  detail::BleuStats s{std::vector<std::size_t>(max_n, 0), std::vector<std::size_t>(max_n, 0)};
  detail::accumulate_bleu(pair, max_n, s);
  return detail::bleu_from_stats(s, 1e-9);
}

// ---------------------------------------------------------------- ROUGE-L

/// Per-item LCS F-measure in [0, 1] against the best-scoring reference.
inline double rouge_l_item(const CaptionPair& p, double beta = 1.2) {
  if (!(beta > 0.0)) throw std::invalid_argument("rouge_l: beta must be positive");
  double best = 0.0;
  for (const auto& r : p.references) {
    const std::size_t lcs = detail::lcs_length(p.candidate, r);
    if (lcs == 0) continue;
    const double prec = static_cast<double>(lcs) / static_cast<double>(p.candidate.size());
    const double rec = static_cast<double>(lcs) / static_cast<double>(r.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * prec * rec / (rec + b2 * prec));
  }
  return best;
}

inline double rouge_l(const std::vector<CaptionPair>& pairs, double beta = 1.2) {
  detail::require_corpus(pairs, "rouge_l");
  std::vector<double> items;
  for (const auto& p : pairs) items.push_back(rouge_l_item(p, beta));
  return 100.0 * detail::sorted_mean(std::move(items));
}

// ---------------------------------------------------------------- METEOR-lite

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

namespace detail {

// Exact search over unigram alignments: maximum matches, then fewest chunks.
// Two tokens may align when their Porter stems agree (which includes exact
// matches). Falls back to a greedy alignment for very long references or
// pathological repetition.
class MeteorAligner {
 public:
  MeteorAligner(const Tokens& cand, const Tokens& ref) {
    for (const auto& t : cand) cand_.push_back(porter_stem(t));
    for (const auto& t : ref) ref_.push_back(porter_stem(t));
  }

  MeteorAlignment align() {
    std::map<std::string, std::size_t> cand_count, ref_count;
    for (const auto& s : cand_) ++cand_count[s];
    for (const auto& s : ref_) ++ref_count[s];
    std::size_t target = 0;
    for (const auto& [s, c] : cand_count) {
      const auto it = ref_count.find(s);
      if (it != ref_count.end()) target += std::min(c, it->second);
    }
    if (target == 0) return {};
    target_ = target;
    if (ref_.size() <= 64) {
      const std::size_t chunks = search(0, 0, -1);
      if (!overflow_ && chunks != kInfeasible) return {target, chunks};
    }
    return {target, greedy_chunks()};
  }

 private:
  static constexpr std::size_t kInfeasible = std::numeric_limits<std::size_t>::max();
  static constexpr std::size_t kMaxStates = 2'000'000;

  // Matches still achievable from candidate position i with `used` ref positions taken.
  std::size_t reachable(std::size_t i, std::uint64_t used) const {
    std::map<std::string, std::size_t> cand_rest, ref_free;
    for (std::size_t k = i; k < cand_.size(); ++k) ++cand_rest[cand_[k]];
    for (std::size_t k = 0; k < ref_.size(); ++k)
      if (!(used >> k & 1U)) ++ref_free[ref_[k]];
    std::size_t n = 0;
    for (const auto& [s, c] : cand_rest) {
      const auto it = ref_free.find(s);
      if (it != ref_free.end()) n += std::min(c, it->second);
    }
    return n;
  }

  std::size_t search(std::size_t i, std::uint64_t used, int prev) {
    const auto matched = static_cast<std::size_t>(std::popcount(used));
    if (matched == target_) return 0;
    if (i == cand_.size() || matched + reachable(i, used) < target_) return kInfeasible;
    const Key key{i, used, prev};
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (memo_.size() >= kMaxStates) {
      overflow_ = true;
      return kInfeasible;
    }
    std::size_t best = search(i + 1, used, -1);
    for (std::size_t r = 0; r < ref_.size(); ++r) {
      if ((used >> r & 1U) || ref_[r] != cand_[i]) continue;
      const std::size_t rest = search(i + 1, used | (std::uint64_t{1} << r), static_cast<int>(r));
      if (rest == kInfeasible) continue;
      const std::size_t cost = (prev >= 0 && static_cast<int>(r) == prev + 1) ? 0 : 1;
      best = std::min(best, rest + cost);
    }
    memo_.emplace(key, best);
    return best;
  }

  // Left to right: continue the current chunk when possible, else take the first free match.
  std::size_t greedy_chunks() const {
    std::vector<bool> used(ref_.size(), false);
    std::size_t chunks = 0;
    std::ptrdiff_t prev = -1;
    for (const auto& token : cand_) {
      const auto next = static_cast<std::size_t>(prev + 1);
      if (prev >= 0 && next < ref_.size() && !used[next] && ref_[next] == token) {
        used[next] = true;
        prev = static_cast<std::ptrdiff_t>(next);
        continue;
      }
      prev = -1;
      for (std::size_t r = 0; r < ref_.size(); ++r) {
        if (!used[r] && ref_[r] == token) {
          used[r] = true;
          prev = static_cast<std::ptrdiff_t>(r);
          ++chunks;
          break;
        }
      }
    }
    return chunks;
  }

  struct Key {
    std::size_t i;
    std::uint64_t used;
    int prev;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = k.used * 0x9E3779B97F4A7C15ULL;
      h ^= (static_cast<std::uint64_t>(k.i) << 32) ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.prev));
      return static_cast<std::size_t>(h ^ (h >> 29));
    }
  };

  std::vector<std::string> cand_, ref_;
  std::size_t target_ = 0;
  bool overflow_ = false;
  std::unordered_map<Key, std::size_t, KeyHash> memo_;
};

}  // namespace detail

inline MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  return detail::MeteorAligner(candidate, reference).align();
}

/// METEOR score in [0, 1] of one candidate against one reference.
inline double meteor_score(const Tokens& candidate, const Tokens& reference) {
  const MeteorAlignment a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

/// Per-item METEOR: best score over the references.
inline double meteor_item(const CaptionPair& p) {
  double best = 0.0;
  for (const auto& r : p.references) best = std::max(best, meteor_score(p.candidate, r));
  return best;
}

inline double meteor_lite(const std::vector<CaptionPair>& pairs) {
  detail::require_corpus(pairs, "meteor_lite");
  std::vector<double> items;
  for (const auto& p : pairs) items.push_back(meteor_item(p));
  return 100.0 * detail::sorted_mean(std::move(items));
}

// ---------------------------------------------------------------- CIDEr-D

/// Per-item CIDEr-D (conventional scale, x10): TF-IDF n-gram vectors with
/// document frequencies over each item's reference set, clipped cosine,
/// Gaussian length penalty, averaged over n = 1..max_n and the references.
inline std::vector<double> cider_items(const std::vector<CaptionPair>& pairs, std::size_t max_n = 4,
                                       double sigma = 6.0) {
  detail::require_corpus(pairs, "cider");
  if (pairs.size() < 2) throw std::invalid_argument("cider: the corpus needs at least two items");
  if (max_n == 0) throw std::invalid_argument("cider: max_n must be at least 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("cider: sigma must be positive");

  // Document frequency: number of items whose references contain the n-gram.
  std::map<Tokens, std::size_t> df;
  for (const auto& p : pairs) {
    std::set<Tokens> seen;
    for (const auto& r : p.references)
      for (std::size_t n = 1; n <= max_n; ++n)
        for (const auto& [g, c] : detail::ngram_counts(r, n)) seen.insert(g);
    for (const auto& g : seen) ++df[g];
  }
  const double log_docs = std::log(static_cast<double>(pairs.size()));

  struct Vec {
    std::vector<std::map<Tokens, double>> weights;
    std::vector<double> norms;
    std::size_t length = 0;
  };
  const auto vectorize = [&](const Tokens& t) {
    Vec v{std::vector<std::map<Tokens, double>>(max_n), std::vector<double>(max_n, 0.0), t.size()};
    for (std::size_t n = 1; n <= max_n; ++n) {
      for (const auto& [g, c] : detail::ngram_counts(t, n)) {
        const auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
        const double w = static_cast<double>(c) * (log_docs - std::log(d));
        v.weights[n - 1][g] = w;
        v.norms[n - 1] += w * w;
      }
      v.norms[n - 1] = std::sqrt(v.norms[n - 1]);
    }
    return v;
  };

  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const Vec cand = vectorize(p.candidate);
    double total = 0.0;
    for (const auto& r : p.references) {
      const Vec ref = vectorize(r);
      const double delta = static_cast<double>(cand.length) - static_cast<double>(ref.length);
      const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      double per_ref = 0.0;
      for (std::size_t n = 0; n < max_n; ++n) {
        double val = 0.0;
        for (const auto& [g, w] : cand.weights[n]) {
          const auto it = ref.weights[n].find(g);
          if (it != ref.weights[n].end()) val += std::min(w, it->second) * it->second;
        }
        if (cand.norms[n] != 0.0 && ref.norms[n] != 0.0) {
          val /= cand.norms[n] * ref.norms[n];
        } else {
          val = 0.0;
        }
        per_ref += val * penalty;
      }
      total += per_ref / static_cast<double>(max_n);
    }
    out.push_back(10.0 * total / static_cast<double>(p.references.size()));
  }
  return out;
}

/// Corpus CIDEr-D on the conventional scale (x10, range [0, 10]).
inline double cider(const std::vector<CaptionPair>& pairs, std::size_t max_n = 4, double sigma = 6.0) {
  return detail::sorted_mean(cider_items(pairs, max_n, sigma));
}

}  // namespace s2t::metrics
