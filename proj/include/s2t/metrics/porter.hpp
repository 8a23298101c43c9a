#pragma once

// Porter (1980) suffix-stripping stemmer for lowercase English words.

#include <string>
#include <string_view>

namespace s2t::metrics {

class PorterStemmer {
 public:
  std::string operator()(std::string_view word) const {
    State s{std::string(word), static_cast<int>(word.size()) - 1, 0};
    if (s.k <= 1) return s.b;
    s.step1ab();
    if (s.k > 0) {
      s.step1c();
      s.step2();
      s.step3();
      s.step4();
      s.step5();
    }
    return s.b.substr(0, static_cast<std::size_t>(s.k + 1));
  }

 private:
  // b[0..k] is the word being stemmed; j marks the stem end after a successful ends().
  struct State {
    std::string b;
    int k;
    int j;

    bool cons(int i) const {
      switch (b[static_cast<std::size_t>(i)]) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return false;
        case 'y': return i == 0 ? true : !cons(i - 1);
        default: return true;
      }
    }

    // Number of VC sequences in b[0..j].
    int m() const {
      int n = 0;
      int i = 0;
      while (true) {
        if (i > j) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
      while (true) {
        while (true) {
          if (i > j) return n;
          if (cons(i)) break;
          ++i;
        }
        ++i;
        ++n;
        while (true) {
          if (i > j) return n;
          if (!cons(i)) break;
          ++i;
        }
        ++i;
      }
    }

    bool vowel_in_stem() const {
      for (int i = 0; i <= j; ++i)
        if (!cons(i)) return true;
      return false;
    }

    bool double_consonant(int i) const {
      if (i < 1) return false;
      if (b[static_cast<std::size_t>(i)] != b[static_cast<std::size_t>(i - 1)]) return false;
      return cons(i);
    }

    // consonant-vowel-consonant ending at i, where the last consonant is not w, x or y.
    bool cvc(int i) const {
      if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
      const char ch = b[static_cast<std::size_t>(i)];
      return ch != 'w' && ch != 'x' && ch != 'y';
    }

    bool ends(std::string_view s) {
      const int len = static_cast<int>(s.size());
      if (len > k + 1) return false;
      if (std::string_view(b).substr(static_cast<std::size_t>(k - len + 1), s.size()) != s) return false;
      j = k - len;
      return true;
    }

    void set_to(std::string_view s) {
      b = b.substr(0, static_cast<std::size_t>(j + 1)) + std::string(s);
      k = j + static_cast<int>(s.size());
    }

    void replace_if_measured(std::string_view s) {
      if (m() > 0) set_to(s);
    }

    char at(int i) const { return b[static_cast<std::size_t>(i)]; }

    void step1ab() {
      if (at(k) == 's') {
        if (ends("sses")) {
          k -= 2;
        } else if (ends("ies")) {
          set_to("i");
        } else if (at(k - 1) != 's') {
          --k;
        }
      }
      if (ends("eed")) {
        if (m() > 0) --k;
      } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
        k = j;
        if (ends("at")) {
          set_to("ate");
        } else if (ends("bl")) {
          set_to("ble");
        } else if (ends("iz")) {
          set_to("ize");
        } else if (double_consonant(k)) {
          --k;
          const char ch = at(k);
          if (ch == 'l' || ch == 's' || ch == 'z') ++k;
        } else if (m() == 1 && cvc(k)) {
          set_to("e");
        }
      }
    }

    void step1c() {
      if (ends("y") && vowel_in_stem()) {
        b.resize(static_cast<std::size_t>(k + 1));
        b[static_cast<std::size_t>(k)] = 'i';
      }
    }

    bool rule(std::string_view suffix, std::string_view replacement) {
      if (!ends(suffix)) return false;
      replace_if_measured(replacement);
      return true;
    }

    void step2() {
      switch (at(k - 1)) {
        case 'a': rule("ational", "ate") || rule("tional", "tion"); break;
        case 'c': rule("enci", "ence") || rule("anci", "ance"); break;
        case 'e': rule("izer", "ize"); break;
        case 'l':
          rule("bli", "ble") || rule("alli", "al") || rule("entli", "ent") || rule("eli", "e") || rule("ousli", "ous");
          break;
        case 'o': rule("ization", "ize") || rule("ation", "ate") || rule("ator", "ate"); break;
        case 's': rule("alism", "al") || rule("iveness", "ive") || rule("fulness", "ful") || rule("ousness", "ous"); break;
        case 't': rule("aliti", "al") || rule("iviti", "ive") || rule("biliti", "ble"); break;
        case 'g': rule("logi", "log"); break;
        default: break;
      }
    }

    void step3() {
      switch (at(k)) {
        case 'e': rule("icate", "ic") || rule("ative", "") || rule("alize", "al"); break;
        case 'i': rule("iciti", "ic"); break;
        case 'l': rule("ical", "ic") || rule("ful", ""); break;
        case 's': rule("ness", ""); break;
        default: break;
      }
    }

    void step4() {
      bool found = false;
      switch (at(k - 1)) {
        case 'a': found = ends("al"); break;
        case 'c': found = ends("ance") || ends("ence"); break;
        case 'e': found = ends("er"); break;
        case 'i': found = ends("ic"); break;
        case 'l': found = ends("able") || ends("ible"); break;
        case 'n': found = ends("ant") || ends("ement") || ends("ment") || ends("ent"); break;
        case 'o':
          found = (ends("ion") && j >= 0 && (at(j) == 's' || at(j) == 't')) || ends("ou");
          break;
        case 's': found = ends("ism"); break;
        case 't': found = ends("ate") || ends("iti"); break;
        case 'u': found = ends("ous"); break;
        case 'v': found = ends("ive"); break;
        case 'z': found = ends("ize"); break;
        default: break;
      }
      if (found && m() > 1) k = j;
    }

    void step5() {
      j = k;
      if (at(k) == 'e') {
        const int a = m();
        if (a > 1 || (a == 1 && !cvc(k - 1))) --k;
      }
      if (at(k) == 'l' && double_consonant(k) && m() > 1) --k;
    }
  };
};

inline std::string porter_stem(std::string_view word) { return PorterStemmer{}(word); }

}  // namespace s2t::metrics
