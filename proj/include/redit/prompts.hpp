#pragma once

// Rewrite-prompt catalog: invariance prompts, equivariance transformation
// pairs, evasion prompts and the dataset-generation prompts.
//
// File format (UTF-8, one JSON object per line):
//   line 1:  {"catalog_version":"<version>"}
//   line 2+: {"id":"...","kind":"...","text":"...","pair_id":"..."}   pair_id optional
//
// Equivariance pairs are formed from the equivariance_forward and
// equivariance_inverse records sharing a pair_id, in order of the forward
// record. The rewrite prompt used between the two transformations is the
// invariance record whose pair_id names the pair, or the first invariance
// record when none does.

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "redit/error.hpp"
#include "redit/hash.hpp"
#include "redit/textio.hpp"

namespace redit {

enum class PromptKind { kInvariance, kEquivarianceForward, kEquivarianceInverse, kEvasion, kGeneration };

inline std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::kInvariance: return "invariance";
    case PromptKind::kEquivarianceForward: return "equivariance_forward";
    case PromptKind::kEquivarianceInverse: return "equivariance_inverse";
    case PromptKind::kEvasion: return "evasion";
    case PromptKind::kGeneration: return "generation";
  }
  return "invariance";
}

inline std::optional<PromptKind> parse_prompt_kind(std::string_view s) {
  for (auto k : {PromptKind::kInvariance, PromptKind::kEquivarianceForward, PromptKind::kEquivarianceInverse,
                 PromptKind::kEvasion, PromptKind::kGeneration}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct RewritePrompt {
  std::string id;
  std::string text;
  PromptKind kind = PromptKind::kInvariance;
  std::string pair_id;  // empty when absent

  bool operator==(const RewritePrompt&) const = default;
};

struct EquivariancePair {
  std::string name;
  RewritePrompt forward;
  RewritePrompt inverse;
  RewritePrompt rewrite;
};

struct PromptCatalog {
  std::string version;
  std::vector<RewritePrompt> prompts;
  std::vector<EquivariancePair> pairs;

  std::vector<RewritePrompt> of_kind(PromptKind kind) const {
    std::vector<RewritePrompt> out;
    std::copy_if(prompts.begin(), prompts.end(), std::back_inserter(out),
                 [kind](const RewritePrompt& p) { return p.kind == kind; });
    return out;
  }

  const RewritePrompt* find(std::string_view id) const {
    auto it = std::find_if(prompts.begin(), prompts.end(), [id](const RewritePrompt& p) { return p.id == id; });
    return it == prompts.end() ? nullptr : &*it;
  }

  /// Content hash over version and every record in order.
  std::string fingerprint() const {
    FingerprintBuilder fp;
    fp.add("version", version);
    for (const auto& p : prompts) {
      fp.add("id", p.id).add("kind", to_string(p.kind)).add("text", p.text).add("pair_id", p.pair_id);
    }
    return fp.hex();
  }
};

inline constexpr std::string_view kBuiltinCatalogVersion = "builtin-2024.1";

/// Assembles pairs from the prompt records and validates the catalog.
/// Throws ParseError / DuplicateId.
inline void link_catalog(PromptCatalog& catalog) {
  std::set<std::string> ids;
  for (const auto& p : catalog.prompts) {
    if (p.id.empty()) throw Error(ErrorCode::kParseError, "prompt with empty id");
    if (p.text.empty()) throw Error(ErrorCode::kParseError, "prompt '" + p.id + "' has empty text");
    if (p.text.find('\n') != std::string::npos) {
      throw Error(ErrorCode::kParseError, "prompt '" + p.id + "' text spans more than one line");
    }
    if (!ids.insert(p.id).second) throw Error(ErrorCode::kDuplicateId, "prompt id '" + p.id + "'");
  }

  catalog.pairs.clear();
  const RewritePrompt* first_invariance = nullptr;
  for (const auto& p : catalog.prompts) {
    if (p.kind == PromptKind::kInvariance) {
      first_invariance = &p;
      break;
    }
  }

  std::set<std::string> seen_pairs;
  for (const auto& fwd : catalog.prompts) {
    if (fwd.kind != PromptKind::kEquivarianceForward) continue;
    if (fwd.pair_id.empty()) {
      throw Error(ErrorCode::kParseError, "equivariance_forward prompt '" + fwd.id + "' lacks pair_id");
    }
    if (!seen_pairs.insert(fwd.pair_id).second) {
      throw Error(ErrorCode::kDuplicateId, "pair '" + fwd.pair_id + "' has more than one forward prompt");
    }
    EquivariancePair pair;
    pair.name = fwd.pair_id;
    pair.forward = fwd;
    const RewritePrompt* inverse = nullptr;
    const RewritePrompt* rewrite = nullptr;
    for (const auto& p : catalog.prompts) {
      if (p.pair_id != fwd.pair_id) continue;
      if (p.kind == PromptKind::kEquivarianceInverse) {
        if (inverse) throw Error(ErrorCode::kDuplicateId, "pair '" + fwd.pair_id + "' has more than one inverse prompt");
        inverse = &p;
      } else if (p.kind == PromptKind::kInvariance && !rewrite) {
        rewrite = &p;
      }
    }
    if (!inverse) throw Error(ErrorCode::kParseError, "pair '" + fwd.pair_id + "' has no equivariance_inverse prompt");
    if (!rewrite) rewrite = first_invariance;
    if (!rewrite) throw Error(ErrorCode::kParseError, "pair '" + fwd.pair_id + "' has no invariance prompt to rewrite with");
    if (inverse->id == fwd.id) throw Error(ErrorCode::kParseError, "pair '" + fwd.pair_id + "' forward and inverse ids match");
    pair.inverse = *inverse;
    pair.rewrite = *rewrite;
    catalog.pairs.push_back(std::move(pair));
  }
  for (const auto& p : catalog.prompts) {
    if (p.kind == PromptKind::kEquivarianceInverse && !seen_pairs.count(p.pair_id)) {
      throw Error(ErrorCode::kParseError, "equivariance_inverse prompt '" + p.id + "' has no matching forward prompt");
    }
  }
}

/// The stock catalog. Note the "opposite meaning" pair uses the same text in
/// both directions: applying it twice should return to the original meaning.
inline PromptCatalog builtin_catalog() {
  PromptCatalog c;
  c.version = std::string(kBuiltinCatalogVersion);
  using K = PromptKind;
  c.prompts = {
      {"polish", "Help me polish this:", K::kInvariance, ""},
      {"rewrite", "Rewrite this for me:", K::kInvariance, ""},
      {"refine", "Refine this for me please:", K::kInvariance, ""},
      {"opposite-forward", "Write this in the opposite meaning:", K::kEquivarianceForward, "opposite"},
      {"opposite-inverse", "Write this in the opposite meaning:", K::kEquivarianceInverse, "opposite"},
      {"expand", "Rewrite to Expand this:", K::kEquivarianceForward, "expand-concise"},
      {"concise", "Rewrite to Concise this:", K::kEquivarianceInverse, "expand-concise"},
      {"evade-human-style", "Help me rephrase it in human style", K::kEvasion, ""},
      {"evade-many-edits", "Help me rephrase it, so that another GPT rewriting will cause a lot of modifications",
       K::kEvasion, ""},
      {"gen-code-describe", "Describe what this code does {code specification}{code}", K::kGeneration, ""},
      {"gen-code-write", "I want to do this {pseudo code}, help me write code starting with this {code specification}",
       K::kGeneration, ""},
      {"gen-yelp-verbose", "Help me write a review based on this {original review}", K::kGeneration, ""},
      {"gen-yelp", "Write a very short and concise review based on this:", K::kGeneration, ""},
      {"gen-arxiv",
       "The title is {title}, start with {first 15 words}, write a short concise abstract based on this:",
       K::kGeneration, ""},
  };
  link_catalog(c);
  return c;
}

/// Prompt text, one newline, then the input. Blank input is rejected.
inline std::string compose(const RewritePrompt& prompt, std::string_view input) {
  if (is_blank(input)) throw Error(ErrorCode::kEmptyInput, "input to prompt '" + prompt.id + "' is blank");
  std::string out;
  out.reserve(prompt.text.size() + 1 + input.size());
  out += prompt.text;
  out += '\n';
  out += input;
  return out;
}

inline std::string serialize_catalog(const PromptCatalog& catalog) {
  std::string out;
  nlohmann::ordered_json header;
  header["catalog_version"] = catalog.version;
  out += header.dump() + "\n";
  for (const auto& p : catalog.prompts) {
    nlohmann::ordered_json rec;
    rec["id"] = p.id;
    rec["kind"] = to_string(p.kind);
    rec["text"] = p.text;
    if (!p.pair_id.empty()) rec["pair_id"] = p.pair_id;
    out += rec.dump() + "\n";
  }
  return out;
}

inline PromptCatalog parse_catalog(std::string_view content, const std::string& source = "<memory>") {
  PromptCatalog catalog;
  const auto lines = split_lines(content);
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = source + ":" + std::to_string(i + 1);
    if (is_blank(lines[i])) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, where + ": invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object()) throw Error(ErrorCode::kParseError, where + ": record is not an object");
    if (!have_header) {
      if (!rec.contains("catalog_version") || !rec["catalog_version"].is_string()) {
        throw Error(ErrorCode::kParseError, where + ": field 'catalog_version' missing in header");
      }
      catalog.version = rec["catalog_version"].get<std::string>();
      have_header = true;
      continue;
    }
    auto field = [&](const char* name, bool required) -> std::string {
      if (!rec.contains(name) || rec[name].is_null()) {
        if (required) throw Error(ErrorCode::kParseError, where + ": field '" + name + "' missing");
        return {};
      }
      if (!rec[name].is_string()) throw Error(ErrorCode::kParseError, where + ": field '" + name + "' is not a string");
      return rec[name].get<std::string>();
    };
    RewritePrompt p;
    p.id = field("id", true);
    const std::string kind = field("kind", true);
    auto parsed = parse_prompt_kind(kind);
    if (!parsed) throw Error(ErrorCode::kParseError, where + ": field 'kind' has unknown value '" + kind + "'");
    p.kind = *parsed;
    p.text = field("text", true);
    p.pair_id = field("pair_id", false);
    catalog.prompts.push_back(std::move(p));
  }
  if (!have_header) throw Error(ErrorCode::kParseError, source + ": empty catalog file");
  link_catalog(catalog);
  return catalog;
}

inline PromptCatalog load_catalog(const std::string& path) { return parse_catalog(read_file(path), path); }

inline void save_catalog(const PromptCatalog& catalog, const std::string& path) {
  write_file(path, serialize_catalog(catalog));
}

}  // namespace redit
