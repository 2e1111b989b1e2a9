#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "provoc/common.hpp"

namespace provoc {

struct TextSequence {
  std::vector<int> tokens;  // ends with EOS
  size_t length = 0;        // token count including EOS
};

// Character vocabulary. The full table is documented in docs/FORMATS.md;
// tests count tokens against that table.
//
//   0 PAD   1 BOS (reserved, not emitted)   2 EOS
//   3 ' '   4 '   5 -   6 .   7 ,   8 ?   9 !   10 :   11 ;
//   12..21  digits 0-9
//   22..47  letters a-z
class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  Vocabulary() {
    const std::string chars = " '-.,?!:;0123456789abcdefghijklmnopqrstuvwxyz";
    int id = 3;
    for (char c : chars) {
      to_id_[c] = id;
      to_char_[id] = c;
      ++id;
    }
    size_ = id;
  }

  int size() const { return size_; }

  bool contains(char c) const { return to_id_.count(c) > 0; }

  int id(char c) const {
    auto it = to_id_.find(c);
    check(it != to_id_.end(), "character not in vocabulary: '", c, "'");
    return it->second;
  }

  char character(int id) const {
    auto it = to_char_.find(id);
    check(it != to_char_.end(), "token id out of vocabulary range: ", id);
    return it->second;
  }

private:
  std::map<char, int> to_id_;
  std::map<int, char> to_char_;
  int size_ = 0;
};

inline const Vocabulary& vocabulary() {
  static const Vocabulary v;
  return v;
}

// Lowercases, collapses whitespace runs to single spaces, trims the ends.
inline std::string normalize_text(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(u));
  }
  return out;
}

// Character tokens plus a trailing EOS; no BOS is emitted.
inline TextSequence tokenize(const std::string& text) {
  const std::string norm = normalize_text(text);
  check(!norm.empty(), "text is empty after normalization");
  const Vocabulary& v = vocabulary();
  std::string bad;
  for (char c : norm) {
    if (!v.contains(c) && bad.find(c) == std::string::npos) bad += c;
  }
  if (!bad.empty()) fail("characters outside vocabulary: \"", bad, "\"");
  TextSequence seq;
  seq.tokens.reserve(norm.size() + 1);
  for (char c : norm) seq.tokens.push_back(v.id(c));
  seq.tokens.push_back(Vocabulary::kEos);
  seq.length = seq.tokens.size();
  return seq;
}

inline std::string detokenize(const TextSequence& seq) {
  const Vocabulary& v = vocabulary();
  std::string out;
  for (size_t i = 0; i < seq.length && i < seq.tokens.size(); ++i) {
    int id = seq.tokens[i];
    if (id == Vocabulary::kEos || id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    out += v.character(id);
  }
  return out;
}

}  // namespace provoc
