#pragma once

// Brute-force reference implementations of the captioning metrics, written
// directly from their definitions and sharing no code with the library.
// Tokens are whitespace-split strings; n-grams are space-joined strings.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Sentence = std::vector<std::string>;

struct Item {
  Sentence cand;
  std::vector<Sentence> refs;
};

inline std::vector<std::string> grams(const Sentence& s, std::size_t n) {
  std::vector<std::string> out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::string g = s[i];
    for (std::size_t k = 1; k < n; ++k) g += " " + s[i + k];
    out.push_back(g);
  }
  return out;
}

inline std::size_t occurrences(const std::vector<std::string>& list, const std::string& g) {
  return static_cast<std::size_t>(std::count(list.begin(), list.end(), g));
}

/// Corpus BLEU-n (cumulative) x100, unsmoothed.
inline double bleu(const std::vector<Item>& corpus, std::size_t n_max) {
  double product = 1.0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    double clipped = 0.0, total = 0.0;
    for (const auto& it : corpus) {
      const auto cg = grams(it.cand, n);
      std::set<std::string> distinct(cg.begin(), cg.end());
      for (const auto& g : distinct) {
        std::size_t max_ref = 0;
        for (const auto& r : it.refs) max_ref = std::max(max_ref, occurrences(grams(r, n), g));
        clipped += static_cast<double>(std::min(occurrences(cg, g), max_ref));
      }
      total += static_cast<double>(cg.size());
    }
    if (total == 0.0 || clipped == 0.0) return 0.0;
    product *= clipped / total;
  }
  double c = 0.0, r = 0.0;
  for (const auto& it : corpus) {
    c += static_cast<double>(it.cand.size());
    double best = -1.0;
    for (const auto& ref : it.refs) {
      const double len = static_cast<double>(ref.size());
      const double d = std::abs(len - static_cast<double>(it.cand.size()));
      const double bd = std::abs(best - static_cast<double>(it.cand.size()));
      if (best < 0.0 || d < bd || (d == bd && len < best)) best = len;
    }
    r += best;
  }
  if (c == 0.0) return 0.0;
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::pow(product, 1.0 / static_cast<double>(n_max));
}

inline bool is_subsequence(const Sentence& sub, const Sentence& s) {
  std::size_t k = 0;
  for (const auto& w : s)
    if (k < sub.size() && sub[k] == w) ++k;
  return k == sub.size();
}

/// LCS by enumerating every subsequence of the candidate.
inline std::size_t lcs(const Sentence& a, const Sentence& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Sentence sub;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) sub.push_back(a[i]);
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline double rouge_l(const std::vector<Item>& corpus, double beta) {
  double sum = 0.0;
  for (const auto& it : corpus) {
    double best = 0.0;
    for (const auto& r : it.refs) {
      const double l = static_cast<double>(lcs(it.cand, r));
      if (l == 0.0) continue;
      const double p = l / static_cast<double>(it.cand.size());
      const double rc = l / static_cast<double>(r.size());
      const double f = (1.0 + beta * beta) * p * rc / (rc + beta * beta * p);
      best = std::max(best, f);
    }
    sum += best;
  }
  return 100.0 * sum / static_cast<double>(corpus.size());
}

/// METEOR of one candidate against one reference by enumerating every
/// alignment (each candidate word maps to nothing or to a distinct
/// reference word it may match).
inline double meteor_pair(const Sentence& c, const Sentence& r,
                          const std::function<bool(const std::string&, const std::string&)>& can_match) {
  std::size_t best_m = 0, best_chunks = 0;
  std::vector<int> map(c.size(), -1);
  std::vector<bool> used(r.size(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == c.size()) {
      std::size_t m = 0, chunks = 0;
      int prev = -10;
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (map[k] < 0) {
          prev = -10;
          continue;
        }
        ++m;
        if (map[k] != prev + 1 || prev < 0) ++chunks;
        prev = map[k];
      }
      if (m > best_m || (m == best_m && chunks < best_chunks)) {
        best_m = m;
        best_chunks = chunks;
      }
      return;
    }
    map[i] = -1;
    rec(i + 1);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (used[j] || !can_match(c[i], r[j])) continue;
      used[j] = true;
      map[i] = static_cast<int>(j);
      rec(i + 1);
      used[j] = false;
      map[i] = -1;
    }
  };
  rec(0);
  if (best_m == 0) return 0.0;
  const double m = static_cast<double>(best_m);
  const double p = m / static_cast<double>(c.size());
  const double rc = m / static_cast<double>(r.size());
  const double f = 10.0 * p * rc / (rc + 9.0 * p);
  return f * (1.0 - 0.5 * std::pow(static_cast<double>(best_chunks) / m, 3.0));
}

inline double meteor(const std::vector<Item>& corpus,
                     const std::function<bool(const std::string&, const std::string&)>& can_match) {
  double sum = 0.0;
  for (const auto& it : corpus) {
    double best = 0.0;
    for (const auto& r : it.refs) best = std::max(best, meteor_pair(it.cand, r, can_match));
    sum += best;
  }
  return 100.0 * sum / static_cast<double>(corpus.size());
}

/// CIDEr-D (conventional x10 scale) straight from the formula.
inline double cider(const std::vector<Item>& corpus, std::size_t n_max, double sigma) {
  const double N = static_cast<double>(corpus.size());
  auto doc_freq = [&](const std::string& g, std::size_t n) {
    double df = 0.0;
    for (const auto& it : corpus) {
      bool found = false;
      for (const auto& r : it.refs) found = found || occurrences(grams(r, n), g) > 0;
      if (found) df += 1.0;
    }
    return df;
  };
  auto tfidf = [&](const Sentence& s, std::size_t n) {
    std::map<std::string, double> v;
    const auto g = grams(s, n);
    for (const auto& x : g) v[x] = static_cast<double>(occurrences(g, x)) * (std::log(N) - std::log(std::max(1.0, doc_freq(x, n))));
    return v;
  };
  double total = 0.0;
  for (const auto& it : corpus) {
    double item = 0.0;
    for (const auto& r : it.refs) {
      double per_ref = 0.0;
      for (std::size_t n = 1; n <= n_max; ++n) {
        const auto vc = tfidf(it.cand, n);
        const auto vr = tfidf(r, n);
        double dot = 0.0, nc = 0.0, nr = 0.0;
        for (const auto& [g, w] : vc) {
          nc += w * w;
          if (vr.count(g)) dot += std::min(w, vr.at(g)) * vr.at(g);
        }
        for (const auto& [g, w] : vr) nr += w * w;
        const double cos = (nc > 0.0 && nr > 0.0) ? dot / (std::sqrt(nc) * std::sqrt(nr)) : 0.0;
        const double delta = static_cast<double>(it.cand.size()) - static_cast<double>(r.size());
        per_ref += cos * std::exp(-delta * delta / (2.0 * sigma * sigma));
      }
      item += per_ref / static_cast<double>(n_max);
    }
    total += 10.0 * item / static_cast<double>(it.refs.size());
  }
  return total / N;
}

}  // namespace oracle
