#pragma once

// Labeled text corpora: file format, validation, stratified splits, length
// buckets and the synthetic offline fixture.
//
// File format (UTF-8, one JSON object per line, keys in this order):
//   {"id":"...","label":"human|machine","domain":"...","generator":"...","text":"..."}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "redit/error.hpp"
#include "redit/metrics.hpp"
#include "redit/random.hpp"
#include "redit/textio.hpp"

namespace redit {

enum class Label { kHuman, kMachine };

inline std::string_view to_string(Label label) { return label == Label::kMachine ? "machine" : "human"; }

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "human") return Label::kHuman;
  if (s == "machine") return Label::kMachine;
  return std::nullopt;
}

struct Document {
  std::string id;
  std::string text;
  Label label = Label::kHuman;
  std::string domain;
  std::string generator;
  std::size_t word_count = 0;

  bool operator==(const Document&) const = default;
};

using Corpus = std::vector<Document>;

inline Document make_document(std::string id, std::string text, Label label, std::string domain,
                              std::string generator) {
  Document d{std::move(id), std::move(text), label, std::move(domain), std::move(generator), 0};
  d.word_count = tokenize(d.text).size();
  return d;
}

inline std::string serialize_document(const Document& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["label"] = to_string(d.label);
  j["domain"] = d.domain;
  j["generator"] = d.generator;
  j["text"] = d.text;
  return j.dump();
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus) out += serialize_document(d) + "\n";
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) { write_file(path, serialize_corpus(corpus)); }

/// Parses and validates a corpus. Blank texts are reported all at once.
inline Corpus parse_corpus(std::string_view content, const std::string& source = "<memory>") {
  Corpus corpus;
  std::set<std::string> ids;
  std::vector<std::string> blank;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, where + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw Error(ErrorCode::kParseError, where + ": record is not an object");
    const std::string rec_id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "?";
    auto field = [&](const char* name) -> std::string {
      if (!j.contains(name) || !j[name].is_string()) {
        throw Error(ErrorCode::kParseError, where + ": record '" + rec_id + "' missing string field '" + name + "'");
      }
      return j[name].get<std::string>();
    };
    const std::string id = field("id");
    const std::string label_s = field("label");
    const auto label = parse_label(label_s);
    if (!label) {
      throw Error(ErrorCode::kParseError, where + ": record '" + id + "' has unknown label '" + label_s + "'");
    }
    std::string domain = field("domain");
    std::string generator = field("generator");
    std::string text = field("text");
    if (!ids.insert(id).second) throw Error(ErrorCode::kDuplicateId, where + ": document id '" + id + "'");
    if (is_blank(text)) {
      blank.push_back(id);
      continue;
    }
    corpus.push_back(make_document(id, std::move(text), *label, std::move(domain), std::move(generator)));
  }
  if (!blank.empty()) {
    std::string list;
    for (const auto& id : blank) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kBlankDocument, source + ": blank text in " + list);
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path), path); }

// ---------------------------------------------------------------------------
// Splits

enum class StratifyField { kLabel, kDomain, kGenerator };

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::vector<StratifyField> stratify_by = {StratifyField::kLabel};
};

/// Stratified, seeded train/test split. Both halves keep corpus order.
inline std::pair<Corpus, Corpus> split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_fraction must lie in (0,1)");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::string key;
    for (auto f : spec.stratify_by) {
      const auto& d = corpus[i];
      key += f == StratifyField::kLabel ? std::string(to_string(d.label)) : f == StratifyField::kDomain ? d.domain : d.generator;
      key += '\x1f';
    }
    auto [it, inserted] = strata.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(i);
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<bool> in_train(corpus.size(), false);
  for (const auto& key : order) {
    auto members = strata[key];
    if (members.size() < 2) {
      std::string shown = key;
      std::replace(shown.begin(), shown.end(), '\x1f', '/');
      throw Error(ErrorCode::kStratumTooSmall, "stratum '" + shown + "' has " + std::to_string(members.size()) + " document(s)");
    }
    portable_shuffle(members, rng);
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(members.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    for (std::size_t k = 0; k < n_train; ++k) in_train[members[k]] = true;
  }

  std::pair<Corpus, Corpus> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) (in_train[i] ? out.first : out.second).push_back(corpus[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Length buckets

inline const std::vector<std::size_t> kDefaultLengthEdges = {10, 25, 50, 100, 200};

struct LengthBucket {
  std::size_t lower = 0;
  std::optional<std::size_t> upper;  // exclusive; none = unbounded
  std::vector<std::string> document_ids;

  std::string name() const {
    return "[" + std::to_string(lower) + "," + (upper ? std::to_string(*upper) : std::string("inf")) + ")";
  }
  bool contains(std::size_t words) const { return words >= lower && (!upper || words < *upper); }
};

/// Half-open word-count buckets [0,e0), [e0,e1), ..., [ek,inf). The first
/// bucket is omitted when e0 is 0.
inline std::vector<LengthBucket> length_buckets(const Corpus& corpus, const std::vector<std::size_t>& edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw Error(ErrorCode::kInvalidArgument, "length edges must be strictly ascending");
  }
  std::vector<LengthBucket> buckets;
  std::size_t lower = 0;
  for (auto e : edges) {
    if (e > lower) buckets.push_back({lower, e, {}});
    lower = e;
  }
  buckets.push_back({lower, std::nullopt, {}});
  for (const auto& d : corpus) {
    for (auto& b : buckets) {
      if (b.contains(d.word_count)) {
        b.document_ids.push_back(d.id);
        break;
      }
    }
  }
  return buckets;
}

// ---------------------------------------------------------------------------
// Synthetic fixture

inline constexpr std::string_view kDefaultMachineMarker = "zmachinez";

struct SynthOptions {
  std::string domain = "synthetic";
  std::string id_prefix = "synth";
  std::string machine_marker = std::string(kDefaultMachineMarker);
  std::size_t min_words = 15;
  std::size_t max_words = 80;
};

/// Random-token documents; machine ones carry the marker token so the mock
/// rewriter edits them at its machine rate.
inline Corpus synth_corpus(std::size_t size, double machine_fraction, std::uint64_t seed, std::size_t vocab_size,
                           const SynthOptions& options = {}) {
  if (size < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic corpus needs at least 2 documents");
  if (!(machine_fraction > 0.0 && machine_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "machine_fraction must lie in (0,1)");
  }
  if (vocab_size == 0) throw Error(ErrorCode::kInvalidArgument, "vocab_size must be positive");
  if (options.min_words == 0 || options.max_words < options.min_words) {
    throw Error(ErrorCode::kInvalidArgument, "invalid synthetic word-count range");
  }

  std::mt19937_64 rng(seed);
  const auto n_machine = static_cast<std::size_t>(std::llround(machine_fraction * static_cast<double>(size)));
  std::vector<bool> is_machine(size, false);
  for (std::size_t i = 0; i < n_machine && i < size; ++i) is_machine[i] = true;
  portable_shuffle(is_machine, rng);

  const std::size_t width = std::to_string(size - 1).size();
  Corpus corpus;
  corpus.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t words = options.min_words + uniform_below(rng, options.max_words - options.min_words + 1);
    std::vector<std::string> tokens;
    tokens.reserve(words + 1);
    for (std::size_t w = 0; w < words; ++w) tokens.push_back("w" + std::to_string(uniform_below(rng, vocab_size)));
    if (is_machine[i]) {
      const auto at = uniform_below(rng, tokens.size() + 1);
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at), options.machine_marker);
    }
    std::string text;
    for (const auto& t : tokens) text += (text.empty() ? "" : " ") + t;
    std::string num = std::to_string(i);
    num.insert(0, width - num.size(), '0');
    corpus.push_back(make_document(options.id_prefix + "-" + num, std::move(text),
                                   is_machine[i] ? Label::kMachine : Label::kHuman, options.domain,
                                   is_machine[i] ? "mock-machine" : "human"));
  }
  return corpus;
}

}  // namespace redit
