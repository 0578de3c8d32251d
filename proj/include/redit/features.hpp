#pragma once

// Rewrite-based feature extraction under the three schemes:
//
//   invariance    for each invariance prompt p_k:  s_k = F(p_k, x)
//                 compare (x, s_k)
//   equivariance  for each pair (T_k, T_k^-1, p_k):
//                 M_k = F(T_k, x), M'_k = F(p_k, M_k), S_k = F(T_k^-1, M'_k)
//                 compare (F(p_k, x), S_k)  or  (x, S_k)
//   uncertainty   K samples x'_i = F(p, x); compare every pair i<j
//
// Each comparison yields R (bag-of-n-grams overlap) and D (Levenshtein
// similarity). Vectors are laid out as all R values followed by all D values.

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "redit/corpus.hpp"
#include "redit/error.hpp"
#include "redit/hash.hpp"
#include "redit/llm.hpp"
#include "redit/metrics.hpp"
#include "redit/prompts.hpp"
#include "redit/textio.hpp"

namespace redit {

enum class Scheme { kInvariance, kEquivariance, kUncertainty };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::kInvariance: return "invariance";
    case Scheme::kEquivariance: return "equivariance";
    case Scheme::kUncertainty: return "uncertainty";
  }
  return "invariance";
}

inline std::optional<Scheme> parse_scheme(std::string_view s) {
  for (auto k : {Scheme::kInvariance, Scheme::kEquivariance, Scheme::kUncertainty}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// What the round-tripped equivariance output is compared against.
enum class EquivarianceReference { kDirectRewrite, kOriginal };

inline std::string_view to_string(EquivarianceReference r) {
  return r == EquivarianceReference::kOriginal ? "original" : "direct_rewrite";
}

struct FeatureConfig {
  Scheme scheme = Scheme::kInvariance;
  std::size_t ngram = 1;
  EquivarianceReference reference = EquivarianceReference::kDirectRewrite;
  std::size_t uncertainty_samples = 5;
  /// Empty = first invariance prompt of the catalog.
  std::string uncertainty_prompt_id;

  std::string model_name;
  double rewrite_temperature = kDeterministicTemperature;
  double sample_temperature = kSamplingTemperature;
  std::uint32_t max_output_tokens = 1024;
};

struct FeatureVector {
  std::vector<double> values;
  std::string schema_fingerprint;
  Scheme scheme = Scheme::kInvariance;
};

enum class RewriteStage { kDirect, kTransformed, kTransformedRewritten, kRoundtrip, kSample };

inline std::string_view to_string(RewriteStage s) {
  switch (s) {
    case RewriteStage::kDirect: return "direct";
    case RewriteStage::kTransformed: return "transformed";
    case RewriteStage::kTransformedRewritten: return "transformed_rewritten";
    case RewriteStage::kRoundtrip: return "roundtrip";
    case RewriteStage::kSample: return "sample";
  }
  return "direct";
}

struct RewriteRecord {
  std::string document_id;
  std::string prompt_id;
  RewriteStage stage = RewriteStage::kDirect;
  std::uint32_t sample_index = 0;
  std::string text;
};

inline std::string serialize_rewrite_record(const RewriteRecord& r) {
  nlohmann::ordered_json j;
  j["document_id"] = r.document_id;
  j["prompt_id"] = r.prompt_id;
  j["stage"] = to_string(r.stage);
  j["sample_index"] = r.sample_index;
  j["text"] = r.text;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Schema

/// Number of prompts, pairs or samples the scheme iterates over.
inline std::size_t scheme_k(const PromptCatalog& catalog, const FeatureConfig& config) {
  switch (config.scheme) {
    case Scheme::kInvariance: return catalog.of_kind(PromptKind::kInvariance).size();
    case Scheme::kEquivariance: return catalog.pairs.size();
    case Scheme::kUncertainty: return config.uncertainty_samples;
  }
  return 0;
}

inline std::size_t feature_dimension(Scheme scheme, std::size_t k) {
  return scheme == Scheme::kUncertainty ? k * (k - 1) : 2 * k;
}

inline const RewritePrompt& uncertainty_prompt(const PromptCatalog& catalog, const FeatureConfig& config) {
  if (!config.uncertainty_prompt_id.empty()) {
    const auto* p = catalog.find(config.uncertainty_prompt_id);
    if (!p) throw Error(ErrorCode::kInvalidArgument, "unknown uncertainty prompt '" + config.uncertainty_prompt_id + "'");
    return *p;
  }
  for (const auto& p : catalog.prompts) {
    if (p.kind == PromptKind::kInvariance) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "catalog has no invariance prompt for the uncertainty scheme");
}

/// Binds features (and models trained on them) to everything that shapes
/// the vector: catalog, scheme, tokenizer, n, K and the scheme options.
inline std::string schema_fingerprint(const PromptCatalog& catalog, const FeatureConfig& config) {
  FingerprintBuilder fp;
  fp.add("catalog_version", catalog.version)
      .add("catalog", catalog.fingerprint())
      .add("scheme", to_string(config.scheme))
      .add("ngram", config.ngram)
      .add("tokenizer", kTokenizerId)
      .add("k", scheme_k(catalog, config));
  if (config.scheme == Scheme::kEquivariance) fp.add("reference", to_string(config.reference));
  if (config.scheme == Scheme::kUncertainty) fp.add("prompt", uncertainty_prompt(catalog, config).id);
  return fp.hex();
}

// ---------------------------------------------------------------------------
// Extraction

namespace detail {

struct Comparison {
  double r = 0.0;
  double d = 0.0;
};

inline Comparison compare(std::string_view reference, std::string_view candidate, std::size_t n) {
  if (is_blank(candidate) || is_blank(reference)) return {0.0, 0.0};
  return {bag_of_ngrams_overlap(tokenize(reference), tokenize(candidate), n).value(),
          levenshtein_similarity(reference, candidate).value()};
}

inline std::vector<double> layout(const std::vector<Comparison>& cs) {
  std::vector<double> v;
  v.reserve(2 * cs.size());
  for (const auto& c : cs) v.push_back(c.r);
  for (const auto& c : cs) v.push_back(c.d);
  return v;
}

/// Runs one rewrite and records it. Returns nullopt (after logging) when the
/// input is blank or the reply is blank after post-processing.
class Stepper {
 public:
  Stepper(Rewriter& rewriter, const FeatureConfig& config, std::string_view document_id,
          std::vector<RewriteRecord>* records)
      : rewriter_(rewriter), config_(config), document_id_(document_id), records_(records) {}

  std::optional<std::string> run(const RewritePrompt& prompt, std::string_view input, RewriteStage stage,
                                 std::uint32_t sample_index = 0, bool sampling = false) {
    if (is_blank(input)) {
      spdlog::warn("document '{}': empty intermediate text before prompt '{}' ({}); features zeroed", document_id_,
                   prompt.id, to_string(stage));
      return std::nullopt;
    }
    CompletionRequest req;
    req.model_name = config_.model_name;
    req.prompt_text = compose(prompt, input);
    req.temperature = sampling ? config_.sample_temperature : config_.rewrite_temperature;
    req.sample_index = sample_index;
    req.max_output_tokens = config_.max_output_tokens;
    CompletionResponse resp;
    try {
      resp = rewriter_.complete(req);
    } catch (const Error& e) {
      std::string ctx = "document '" + std::string(document_id_) + "', prompt '" + prompt.id + "', stage " +
                        std::string(to_string(stage));
      if (stage == RewriteStage::kSample) ctx += ", sample " + std::to_string(sample_index);
      throw e.with_context(ctx);
    }
    if (records_) records_->push_back({std::string(document_id_), prompt.id, stage, sample_index, resp.text});
    if (is_blank(resp.text)) {
      spdlog::warn("document '{}': empty rewrite for prompt '{}' ({}); features zeroed", document_id_, prompt.id,
                   to_string(stage));
      return std::nullopt;
    }
    return std::move(resp.text);
  }

 private:
  Rewriter& rewriter_;
  const FeatureConfig& config_;
  std::string_view document_id_;
  std::vector<RewriteRecord>* records_;
};

inline void require_document(std::string_view document) {
  if (is_blank(document)) throw Error(ErrorCode::kEmptyInput, "document is blank");
}

}  // namespace detail

/// [R_1..R_K, D_1..D_K] comparing the document with each invariance rewrite.
inline FeatureVector extract_invariance(std::string_view document, const PromptCatalog& catalog, Rewriter& rewriter,
                                        const FeatureConfig& config = {}, std::string_view document_id = "",
                                        std::vector<RewriteRecord>* records = nullptr) {
  detail::require_document(document);
  const auto prompts = catalog.of_kind(PromptKind::kInvariance);
  if (prompts.empty()) throw Error(ErrorCode::kInvalidArgument, "invariance scheme needs at least one invariance prompt");
  FeatureConfig cfg = config;
  cfg.scheme = Scheme::kInvariance;

  detail::Stepper step(rewriter, cfg, document_id, records);
  std::vector<detail::Comparison> cs;
  for (const auto& p : prompts) {
    auto s = step.run(p, document, RewriteStage::kDirect);
    cs.push_back(s ? detail::compare(document, *s, cfg.ngram) : detail::Comparison{});
  }
  return {detail::layout(cs), schema_fingerprint(catalog, cfg), Scheme::kInvariance};
}

/// Transform, rewrite, undo; then compare against the direct rewrite (or
/// the original, depending on `config.reference`).
inline FeatureVector extract_equivariance(std::string_view document, const PromptCatalog& catalog, Rewriter& rewriter,
                                          const FeatureConfig& config = {}, std::string_view document_id = "",
                                          std::vector<RewriteRecord>* records = nullptr) {
  detail::require_document(document);
  if (catalog.pairs.empty()) throw Error(ErrorCode::kInvalidArgument, "equivariance scheme needs at least one prompt pair");
  FeatureConfig cfg = config;
  cfg.scheme = Scheme::kEquivariance;

  detail::Stepper step(rewriter, cfg, document_id, records);
  std::vector<detail::Comparison> cs;
  for (const auto& pair : catalog.pairs) {
    std::optional<std::string> reference;
    if (cfg.reference == EquivarianceReference::kDirectRewrite) {
      reference = step.run(pair.rewrite, document, RewriteStage::kDirect);
    } else {
      reference = std::string(document);
    }
    auto transformed = step.run(pair.forward, document, RewriteStage::kTransformed);
    std::optional<std::string> rewritten;
    if (transformed) rewritten = step.run(pair.rewrite, *transformed, RewriteStage::kTransformedRewritten);
    std::optional<std::string> roundtrip;
    if (rewritten) roundtrip = step.run(pair.inverse, *rewritten, RewriteStage::kRoundtrip);
    cs.push_back(reference && roundtrip ? detail::compare(*reference, *roundtrip, cfg.ngram) : detail::Comparison{});
  }
  return {detail::layout(cs), schema_fingerprint(catalog, cfg), Scheme::kEquivariance};
}

/// K sampled rewrites with the same prompt; compares every pair i<j of
/// samples with each other (the original is not compared).
inline FeatureVector extract_uncertainty(std::string_view document, const PromptCatalog& catalog, Rewriter& rewriter,
                                         const FeatureConfig& config = {}, std::string_view document_id = "",
                                         std::vector<RewriteRecord>* records = nullptr) {
  detail::require_document(document);
  if (config.uncertainty_samples < 2) throw Error(ErrorCode::kInvalidArgument, "uncertainty scheme needs K >= 2 samples");
  FeatureConfig cfg = config;
  cfg.scheme = Scheme::kUncertainty;
  const RewritePrompt& prompt = uncertainty_prompt(catalog, cfg);

  detail::Stepper step(rewriter, cfg, document_id, records);
  std::vector<std::optional<std::string>> samples;
  for (std::size_t k = 0; k < cfg.uncertainty_samples; ++k) {
    samples.push_back(step.run(prompt, document, RewriteStage::kSample, static_cast<std::uint32_t>(k), true));
  }
  std::vector<detail::Comparison> cs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      cs.push_back(samples[i] && samples[j] ? detail::compare(*samples[i], *samples[j], cfg.ngram) : detail::Comparison{});
    }
  }
  return {detail::layout(cs), schema_fingerprint(catalog, cfg), Scheme::kUncertainty};
}

/// Single-prompt form: K samples of `prompt` (which need not be in a catalog).
inline FeatureVector extract_uncertainty(std::string_view document, const RewritePrompt& prompt, Rewriter& rewriter,
                                         std::size_t k, const FeatureConfig& config = {}) {
  PromptCatalog catalog;
  catalog.version = "adhoc";
  catalog.prompts = {prompt};
  catalog.prompts.front().kind = PromptKind::kInvariance;
  FeatureConfig cfg = config;
  cfg.uncertainty_samples = k;
  cfg.uncertainty_prompt_id = prompt.id;
  return extract_uncertainty(document, catalog, rewriter, cfg);
}

inline FeatureVector extract(std::string_view document, const PromptCatalog& catalog, Rewriter& rewriter,
                             const FeatureConfig& config, std::string_view document_id = "",
                             std::vector<RewriteRecord>* records = nullptr) {
  switch (config.scheme) {
    case Scheme::kInvariance: return extract_invariance(document, catalog, rewriter, config, document_id, records);
    case Scheme::kEquivariance: return extract_equivariance(document, catalog, rewriter, config, document_id, records);
    case Scheme::kUncertainty: return extract_uncertainty(document, catalog, rewriter, config, document_id, records);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown scheme");
}

/// Concatenates vectors from several schemes into one.
inline FeatureVector concatenate(const std::vector<FeatureVector>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to concatenate");
  FeatureVector out;
  out.scheme = parts.front().scheme;
  FingerprintBuilder fp;
  for (const auto& p : parts) {
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    fp.add("part", p.schema_fingerprint);
  }
  out.schema_fingerprint = fp.hex();
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level extraction and feature files

struct FeatureRecord {
  std::string document_id;
  Label label = Label::kHuman;
  FeatureVector features;
};

struct CorpusFeatures {
  std::vector<FeatureRecord> records;  // corpus order, successes only
  std::vector<std::string> failures;   // one message per failed document
  std::vector<RewriteRecord> rewrites;
};

/// Extracts every document with up to `workers` threads. Output order
/// follows the corpus regardless of completion order.
inline CorpusFeatures extract_corpus(const Corpus& corpus, const PromptCatalog& catalog, Rewriter& rewriter,
                                     const FeatureConfig& config, std::size_t workers = 4,
                                     bool keep_rewrites = false) {
  struct Slot {
    std::optional<FeatureVector> fv;
    std::string error;
    std::vector<RewriteRecord> rewrites;
  };
  std::vector<Slot> slots(corpus.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto work = [&] {
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      const auto& d = corpus[i];
      try {
        slots[i].fv = extract(d.text, catalog, rewriter, config, d.id, keep_rewrites ? &slots[i].rewrites : nullptr);
      } catch (const Error& e) {
        slots[i].error = e.what();
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, corpus.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (fatal) std::rethrow_exception(fatal);

  CorpusFeatures out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (slots[i].fv) {
      out.records.push_back({corpus[i].id, corpus[i].label, std::move(*slots[i].fv)});
    } else {
      out.failures.push_back(std::move(slots[i].error));
    }
    for (auto& r : slots[i].rewrites) out.rewrites.push_back(std::move(r));
  }
  return out;
}

/// Like extract_corpus, but any per-document failure is an error.
inline std::vector<FeatureRecord> extract_corpus_strict(const Corpus& corpus, const PromptCatalog& catalog,
                                                        Rewriter& rewriter, const FeatureConfig& config,
                                                        std::size_t workers = 4) {
  auto result = extract_corpus(corpus, catalog, rewriter, config, workers);
  if (!result.failures.empty()) {
    throw Error(ErrorCode::kTransportError, std::to_string(result.failures.size()) + " document(s) failed; first: " +
                                                result.failures.front());
  }
  return std::move(result.records);
}

inline std::string serialize_feature_record(const FeatureRecord& r) {
  std::string line = "{\"document_id\":" + nlohmann::json(r.document_id).dump();
  line += ",\"label\":\"" + std::string(to_string(r.label)) + "\"";
  line += ",\"scheme\":\"" + std::string(to_string(r.features.scheme)) + "\"";
  line += ",\"schema_fingerprint\":" + nlohmann::json(r.features.schema_fingerprint).dump();
  line += ",\"values\":[";
  for (std::size_t i = 0; i < r.features.values.size(); ++i) {
    if (i) line += ',';
    line += format_real(r.features.values[i]);
  }
  line += "]}";
  return line;
}

inline std::string serialize_features(const std::vector<FeatureRecord>& records) {
  std::string out;
  for (const auto& r : records) out += serialize_feature_record(r) + "\n";
  return out;
}

inline std::vector<FeatureRecord> parse_features(std::string_view content, const std::string& source = "<memory>") {
  std::vector<FeatureRecord> out;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      FeatureRecord r;
      r.document_id = j.at("document_id").get<std::string>();
      const auto label = parse_label(j.at("label").get<std::string>());
      const auto scheme = parse_scheme(j.at("scheme").get<std::string>());
      if (!label || !scheme) throw Error(ErrorCode::kParseError, where + ": bad label or scheme");
      r.label = *label;
      r.features.scheme = *scheme;
      r.features.schema_fingerprint = j.at("schema_fingerprint").get<std::string>();
      r.features.values = j.at("values").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, where + ": " + e.what());
    }
  }
  return out;
}

inline void save_features(const std::vector<FeatureRecord>& records, const std::string& path) {
  write_file(path, serialize_features(records));
}

inline std::vector<FeatureRecord> load_features(const std::string& path) {
  return parse_features(read_file(path), path);
}

}  // namespace redit
