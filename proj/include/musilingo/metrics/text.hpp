// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Text normalisation shared by the evaluation metrics, and the Porter
// stemmer used by METEOR's second matching stage.

#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace musilingo::metrics {

/// Case-folded tokens: runs of word characters, and every ASCII
/// punctuation mark as its own token. Bytes >= 0x80 count as word
/// characters so multi-byte UTF-8 stays inside its word.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

// Porter (1980) suffix-stripping stemmer, following the structure of the
// reference C implementation.
class PorterStemmer {
 public:
  std::string operator()(std::string_view word) const {
    State s{std::string(word), 0, 0};
    if (s.b.size() <= 2) return s.b;
    s.k = static_cast<int>(s.b.size()) - 1;
    step1ab(s);
    if (s.k > 0) {
      step1c(s);
      step2(s);
      step3(s);
      step4(s);
      step5(s);
    }
    return s.b.substr(0, static_cast<std::size_t>(s.k) + 1);
  }

 private:
  struct State {
    std::string b;
    int k;  // end of current word
    int j;  // end of stem after a successful ends()
  };

  static bool cons(const State& s, int i) {
    switch (s.b[static_cast<std::size_t>(i)]) {
      case 'a':
      case 'e':
      case 'i':
      case 'o':
      case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(s, i - 1);
      default:
        return true;
    }
  }

  // Number of VC sequences in b[0..j].
  static int m(const State& s) {
    int n = 0;
    int i = 0;
    while (true) {
      if (i > s.j) return n;
      if (!cons(s, i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > s.j) return n;
        if (cons(s, i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > s.j) return n;
        if (!cons(s, i)) break;
        ++i;
      }
      ++i;
    }
  }

  static bool vowel_in_stem(const State& s) {
    for (int i = 0; i <= s.j; ++i)
      if (!cons(s, i)) return true;
    return false;
  }

  static bool double_cons(const State& s, int j) {
    if (j < 1) return false;
    if (s.b[static_cast<std::size_t>(j)] != s.b[static_cast<std::size_t>(j - 1)]) return false;
    return cons(s, j);
  }

  static bool cvc(const State& s, int i) {
    if (i < 2 || !cons(s, i) || cons(s, i - 1) || !cons(s, i - 2)) return false;
    const char ch = s.b[static_cast<std::size_t>(i)];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  static bool ends(State& s, std::string_view suffix) {
    const int len = static_cast<int>(suffix.size());
    if (len > s.k + 1) return false;
    if (std::string_view(s.b).substr(static_cast<std::size_t>(s.k - len + 1), suffix.size()) != suffix) return false;
    s.j = s.k - len;
    return true;
  }

  static void set_to(State& s, std::string_view replacement) {
    s.b.replace(static_cast<std::size_t>(s.j + 1), static_cast<std::size_t>(s.k - s.j), replacement);
    s.k = s.j + static_cast<int>(replacement.size());
    s.b.resize(static_cast<std::size_t>(s.k) + 1);
  }

  static void replace_if_measure(State& s, std::string_view replacement) {
    if (m(s) > 0) set_to(s, replacement);
  }

  static char at(const State& s, int i) { return s.b[static_cast<std::size_t>(i)]; }

  static void step1ab(State& s) {
    if (at(s, s.k) == 's') {
      if (ends(s, "sses")) {
        s.k -= 2;
      } else if (ends(s, "ies")) {
        set_to(s, "i");
      } else if (at(s, s.k - 1) != 's') {
        s.k -= 1;
      }
      s.b.resize(static_cast<std::size_t>(s.k) + 1);
    }
    if (ends(s, "eed")) {
      if (m(s) > 0) {
        s.k -= 1;
        s.b.resize(static_cast<std::size_t>(s.k) + 1);
      }
    } else if ((ends(s, "ed") || ends(s, "ing")) && vowel_in_stem(s)) {
      s.k = s.j;
      s.b.resize(static_cast<std::size_t>(s.k) + 1);
      if (ends(s, "at")) {
        set_to(s, "ate");
      } else if (ends(s, "bl")) {
        set_to(s, "ble");
      } else if (ends(s, "iz")) {
        set_to(s, "ize");
      } else if (double_cons(s, s.k)) {
        const char ch = at(s, s.k);
        if (ch != 'l' && ch != 's' && ch != 'z') {
          s.k -= 1;
          s.b.resize(static_cast<std::size_t>(s.k) + 1);
        }
      } else {
        s.j = s.k;
        if (m(s) == 1 && cvc(s, s.k)) set_to(s, "e");
      }
    }
  }

  static void step1c(State& s) {
    if (ends(s, "y") && vowel_in_stem(s)) s.b[static_cast<std::size_t>(s.k)] = 'i';
  }

  static void step2(State& s) {
    if (s.k < 1) return;
    struct Rule {
      std::string_view from, to;
    };
    static constexpr Rule rules[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},   {"izer", "ize"},
        {"bli", "ble"},     {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},       {"ousli", "ous"},
        {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
        {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
        {"logi", "log"},
    };
    // The reference implementation dispatches on the penultimate letter and
    // tries suffixes in table order; the first matching suffix wins.
    const char pen = at(s, s.k - 1);
    for (const auto& r : rules) {
      if (r.from[r.from.size() - 2] != pen) continue;
      if (ends(s, r.from)) {
        replace_if_measure(s, r.to);
        return;
      }
    }
  }

  static void step3(State& s) {
    struct Rule {
      std::string_view from, to;
    };
    static constexpr Rule rules[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    };
    const char last = at(s, s.k);
    for (const auto& r : rules) {
      if (r.from.back() != last) continue;
      if (ends(s, r.from)) {
        replace_if_measure(s, r.to);
        return;
      }
    }
  }

  static void step4(State& s) {
    if (s.k < 1) return;
    bool matched = false;
    switch (at(s, s.k - 1)) {
      case 'a':
        matched = ends(s, "al");
        break;
      case 'c':
        matched = ends(s, "ance") || ends(s, "ence");
        break;
      case 'e':
        matched = ends(s, "er");
        break;
      case 'i':
        matched = ends(s, "ic");
        break;
      case 'l':
        matched = ends(s, "able") || ends(s, "ible");
        break;
      case 'n':
        matched = ends(s, "ant") || ends(s, "ement") || ends(s, "ment") || ends(s, "ent");
        break;
      case 'o':
        if (ends(s, "ion") && s.j >= 0 && (at(s, s.j) == 's' || at(s, s.j) == 't')) {
          matched = true;
        } else {
          matched = ends(s, "ou");
        }
        break;
      case 's':
        matched = ends(s, "ism");
        break;
      case 't':
        matched = ends(s, "ate") || ends(s, "iti");
        break;
      case 'u':
        matched = ends(s, "ous");
        break;
      case 'v':
        matched = ends(s, "ive");
        break;
      case 'z':
        matched = ends(s, "ize");
        break;
      default:
        break;
    }
    if (matched && m(s) > 1) {
      s.k = s.j;
      s.b.resize(static_cast<std::size_t>(s.k) + 1);
    }
  }

  static void step5(State& s) {
    s.j = s.k;
    if (at(s, s.k) == 'e') {
      const int a = m(s);
      if (a > 1 || (a == 1 && !cvc(s, s.k - 1))) {
        s.k -= 1;
        s.b.resize(static_cast<std::size_t>(s.k) + 1);
      }
    }
    s.j = s.k;
    if (at(s, s.k) == 'l' && double_cons(s, s.k) && m(s) > 1) {
      s.k -= 1;
      s.b.resize(static_cast<std::size_t>(s.k) + 1);
    }
  }
};

inline std::string porter_stem(std::string_view word) { return PorterStemmer{}(word); }

}  // namespace musilingo::metrics
