#pragma once

// Symbolic text-similarity measurements between an input and its rewrite.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "redit/error.hpp"
#include "redit/unicode.hpp"

namespace redit {

/// Identifies the tokenizer below; folded into every feature-schema
/// fingerprint so features from different tokenizers never mix.
inline constexpr std::string_view kTokenizerId = "ws-lower-strip-punct/1";

struct TokenSequence {
  std::vector<std::string> tokens;
  std::size_t source_length_chars = 0;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
};

/// A similarity in [0,1]; 1 means identical.
class SimilarityScore {
 public:
  constexpr SimilarityScore() = default;
  constexpr explicit SimilarityScore(double v) : value_(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v)) {}
  constexpr double value() const noexcept { return value_; }
  constexpr operator double() const noexcept { return value_; }

 private:
  double value_ = 0.0;
};

/// Minimum number of single-scalar insertions, deletions and substitutions
/// turning `a` into `b`. Two-row DP over the shorter string.
inline std::size_t levenshtein_distance(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  // b is now the shorter one; rows have |b|+1 entries.
  if (b.empty()) return a.size();

  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> curr(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});

  for (std::size_t i = 1; i <= a.size(); ++i) {
    curr[0] = i;
    const char32_t ca = a[i - 1];
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ca == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, sub});
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

inline std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
  return levenshtein_distance(unicode::decode(a), unicode::decode(b));
}

/// 1 - distance / max(len(original), len(rewritten)), lengths in scalar
/// values. Two empty texts are identical, so the score is 1.
inline SimilarityScore levenshtein_similarity(std::string_view original, std::string_view rewritten) {
  const std::u32string a = unicode::decode(original);
  const std::u32string b = unicode::decode(rewritten);
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return SimilarityScore(1.0);
  const auto d = levenshtein_distance(a, b);
  return SimilarityScore(1.0 - static_cast<double>(d) / static_cast<double>(longest));
}

/// Lowercases, splits on runs of whitespace and strips leading/trailing
/// punctuation from each piece. Pieces that are all punctuation vanish.
inline TokenSequence tokenize(std::string_view text) {
  const std::u32string cps = unicode::decode(text);
  TokenSequence seq;
  seq.source_length_chars = cps.size();

  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && unicode::is_space(cps[i])) ++i;
    std::size_t start = i;
    while (i < cps.size() && !unicode::is_space(cps[i])) ++i;
    std::size_t end = i;
    while (start < end && unicode::is_punct(cps[start])) ++start;
    while (end > start && unicode::is_punct(cps[end - 1])) --end;
    if (start == end) continue;
    std::string token;
    for (std::size_t k = start; k < end; ++k) unicode::append_utf8(token, unicode::to_lower(cps[k]));
    seq.tokens.push_back(std::move(token));
  }
  return seq;
}

namespace detail {

inline std::vector<std::string> ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::vector<std::string> out;
  if (tokens.size() < n) return out;
  out.reserve(tokens.size() - n + 1);
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += tokens[i + k];
    }
    out.push_back(std::move(key));
  }
  return out;
}

}  // namespace detail

/// Size of the multiset intersection of contiguous n-token windows, divided
/// by the number of windows in the original.
inline SimilarityScore bag_of_ngrams_overlap(const TokenSequence& original, const TokenSequence& rewritten,
                                             std::size_t n = 1) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "n-gram size must be at least 1");
  const bool original_short = original.size() < n;
  const bool rewritten_short = rewritten.size() < n;
  if (original_short && rewritten_short) return SimilarityScore(1.0);
  if (original_short) return SimilarityScore(0.0);

  std::unordered_map<std::string, std::size_t> bag;
  const auto orig_grams = detail::ngrams(original.tokens, n);
  for (const auto& g : orig_grams) ++bag[g];

  std::size_t common = 0;
  for (const auto& g : detail::ngrams(rewritten.tokens, n)) {
    auto it = bag.find(g);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, orig_grams.size()));
  return SimilarityScore(static_cast<double>(common) / denom);
}

}  // namespace redit
