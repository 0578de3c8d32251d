#pragma once

// Experiment harness: F1 reports with slices, and the in-domain,
// out-of-distribution, adaptive-prompt and length protocols.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redit/corpus.hpp"
#include "redit/error.hpp"
#include "redit/features.hpp"
#include "redit/hash.hpp"
#include "redit/llm.hpp"
#include "redit/model.hpp"
#include "redit/prompts.hpp"
#include "redit/stats.hpp"
#include "redit/textio.hpp"

namespace redit {

// ---------------------------------------------------------------------------
// Metrics

/// Confusion counts with machine as the positive class.
struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(Label truth, Label predicted) {
    if (predicted == Label::kMachine) {
      (truth == Label::kMachine ? tp : fp) += 1;
    } else {
      (truth == Label::kMachine ? fn : tn) += 1;
    }
  }
  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const Counts&) const = default;
};

struct SliceReport {
  Counts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline SliceReport score(const Counts& c) {
  SliceReport r;
  r.counts = c;
  r.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

struct EvalReport {
  SliceReport overall;
  std::map<std::string, SliceReport> slices;
  std::string config_fingerprint;
  /// Protocol name, source/target corpora, prompt sets, ...
  std::map<std::string, std::string> tags;

  const Counts& counts() const noexcept { return overall.counts; }
  double precision() const noexcept { return overall.precision; }
  double recall() const noexcept { return overall.recall; }
  double f1() const noexcept { return overall.f1; }
};

struct ScoredDocument {
  std::string document_id;
  Label truth = Label::kHuman;
  Label predicted = Label::kHuman;
  double probability_machine = 0.0;
  std::string domain;
  std::string generator;
  std::size_t word_count = 0;
};

struct SliceConfig {
  bool by_domain = false;
  bool by_generator = false;
  bool by_length = false;
  std::vector<std::size_t> length_edges = kDefaultLengthEdges;
};

inline EvalReport f1_report(std::span<const ScoredDocument> scored, const SliceConfig& slices = {}) {
  if (scored.empty()) throw Error(ErrorCode::kInvalidArgument, "no predictions to report on");
  Counts overall;
  std::map<std::string, Counts> sliced;
  std::vector<LengthBucket> buckets;
  if (slices.by_length) buckets = length_buckets({}, slices.length_edges);
  for (const auto& s : scored) {
    overall.add(s.truth, s.predicted);
    if (slices.by_domain) sliced["domain=" + s.domain].add(s.truth, s.predicted);
    if (slices.by_generator) sliced["generator=" + s.generator].add(s.truth, s.predicted);
    if (slices.by_length) {
      for (const auto& b : buckets) {
        if (b.contains(s.word_count)) {
          sliced["length=" + b.name()].add(s.truth, s.predicted);
          break;
        }
      }
    }
  }
  EvalReport report;
  report.overall = score(overall);
  for (const auto& [k, c] : sliced) report.slices[k] = score(c);
  if (slices.by_length) {
    // Every bucket gets a row, empty or not.
    for (const auto& b : buckets) report.slices.try_emplace("length=" + b.name(), score(Counts{}));
  }
  return report;
}

/// Overload for bare (prediction, truth) pairs.
inline EvalReport f1_report(std::span<const std::pair<Prediction, Label>> predictions) {
  std::vector<ScoredDocument> scored;
  scored.reserve(predictions.size());
  for (const auto& [p, truth] : predictions) {
    scored.push_back({"", truth, p.label, p.probability_machine, "", "", 0});
  }
  return f1_report(scored);
}

// ---------------------------------------------------------------------------
// Report output

inline nlohmann::ordered_json slice_json(const SliceReport& s) {
  nlohmann::ordered_json j;
  j["tp"] = s.counts.tp;
  j["fp"] = s.counts.fp;
  j["fn"] = s.counts.fn;
  j["tn"] = s.counts.tn;
  return j;
}

/// Line-delimited records: the overall row, then one row per slice.
/// Reals are written with 17 significant digits.
inline std::string serialize_report(const EvalReport& r) {
  auto line = [&](std::string_view kind, std::string_view key, const SliceReport& s) {
    std::string out = "{\"record\":\"" + std::string(kind) + "\"";
    if (!key.empty()) out += ",\"slice\":" + nlohmann::json(std::string(key)).dump();
    out += ",\"config_fingerprint\":\"" + r.config_fingerprint + "\"";
    if (kind == "report") {
      nlohmann::ordered_json tags(nlohmann::ordered_json::object());
      for (const auto& [k, v] : r.tags) tags[k] = v;
      out += ",\"tags\":" + tags.dump();
    }
    const auto counts = slice_json(s).dump();
    out += "," + counts.substr(1, counts.size() - 2);
    out += ",\"precision\":" + format_real(s.precision);
    out += ",\"recall\":" + format_real(s.recall);
    out += ",\"f1\":" + format_real(s.f1) + "}\n";
    return out;
  };
  std::string out = line("report", "", r.overall);
  for (const auto& [k, s] : r.slices) out += line("slice", k, s);
  return out;
}

/// Human-readable summary table.
inline std::string format_report_table(const EvalReport& r) {
  std::string out;
  char buf[256];
  for (const auto& [k, v] : r.tags) out += k + ": " + v + "\n";
  out += "config: " + r.config_fingerprint.substr(0, 16) + "\n";
  std::snprintf(buf, sizeof buf, "%-28s %6s %6s %6s %6s %9s %9s %9s\n", "slice", "tp", "fp", "fn", "tn", "precision",
                "recall", "f1");
  out += buf;
  auto row = [&](const std::string& name, const SliceReport& s) {
    std::snprintf(buf, sizeof buf, "%-28s %6zu %6zu %6zu %6zu %9.4f %9.4f %9.4f\n", name.c_str(), s.counts.tp,
                  s.counts.fp, s.counts.fn, s.counts.tn, s.precision, s.recall, s.f1);
    out += buf;
  };
  row("overall", r.overall);
  for (const auto& [k, s] : r.slices) row(k, s);
  return out;
}

/// Per-feature, per-label histograms over [0,1] as tab-separated text:
/// feature, label, bin_lower, bin_upper, count.
inline std::string feature_histograms(std::span<const FeatureRecord> records, std::size_t bins = 20) {
  if (bins == 0) throw Error(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  std::string out = "feature\tlabel\tbin_lower\tbin_upper\tcount\n";
  if (records.empty()) return out;
  const std::size_t dim = records.front().features.values.size();
  for (std::size_t f = 0; f < dim; ++f) {
    for (Label label : {Label::kHuman, Label::kMachine}) {
      std::vector<std::size_t> counts(bins, 0);
      for (const auto& r : records) {
        if (r.label != label || f >= r.features.values.size()) continue;
        const double v = std::clamp(r.features.values[f], 0.0, 1.0);
        const auto bin = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
        ++counts[bin];
      }
      for (std::size_t b = 0; b < bins; ++b) {
        out += std::to_string(f) + "\t" + std::string(to_string(label)) + "\t" +
               format_real(static_cast<double>(b) / static_cast<double>(bins)) + "\t" +
               format_real(static_cast<double>(b + 1) / static_cast<double>(bins)) + "\t" + std::to_string(counts[b]) +
               "\n";
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  FeatureConfig features;
  TrainConfig train;
  SplitSpec split;
  SliceConfig slices;
  std::size_t workers = 4;
  /// Describes the rewriter (mock settings or remote model); part of the fingerprint.
  std::string rewriter_id;
  /// When non-empty, features, model and report are written here.
  std::string output_dir;
};

struct ExperimentResult {
  EvalReport report;
  DetectorModel model;
  std::vector<FeatureRecord> train_features;
  std::vector<FeatureRecord> test_features;
};

inline std::string corpus_fingerprint(const Corpus& corpus) {
  FingerprintBuilder fp;
  for (const auto& d : corpus) fp.add("doc", serialize_document(d));
  return fp.hex();
}

inline FingerprintBuilder experiment_fingerprint(std::string_view protocol, const PromptCatalog& catalog,
                                                 const ExperimentConfig& c) {
  FingerprintBuilder fp;
  const auto& f = c.features;
  fp.add("protocol", protocol)
      .add("catalog", catalog.fingerprint())
      .add("scheme", to_string(f.scheme))
      .add("ngram", f.ngram)
      .add("reference", to_string(f.reference))
      .add("samples", f.uncertainty_samples)
      .add("uncertainty_prompt", f.uncertainty_prompt_id)
      .add("model_name", f.model_name)
      .add("rewrite_temperature", f.rewrite_temperature)
      .add("sample_temperature", f.sample_temperature)
      .add("max_output_tokens", static_cast<long long>(f.max_output_tokens))
      .add("learning_rate", c.train.learning_rate)
      .add("epochs", c.train.epochs)
      .add("l2", c.train.l2)
      .add("train_seed", std::to_string(c.train.seed))
      .add("train_fraction", c.split.train_fraction)
      .add("split_seed", std::to_string(c.split.seed))
      .add("rewriter", c.rewriter_id);
  std::string strata;
  for (auto s : c.split.stratify_by) strata += std::to_string(static_cast<int>(s));
  fp.add("stratify", strata);
  fp.add("slices", std::string(c.slices.by_domain ? "d" : "") + (c.slices.by_generator ? "g" : "") +
                       (c.slices.by_length ? "l" : ""));
  std::string edges;
  for (auto e : c.slices.length_edges) edges += std::to_string(e) + ",";
  fp.add("edges", edges);
  return fp;
}

namespace detail {

inline std::vector<ScoredDocument> score_documents(const DetectorModel& model, const Corpus& docs,
                                                   const std::vector<FeatureRecord>& features) {
  std::map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id[d.id] = &d;
  std::vector<ScoredDocument> out;
  out.reserve(features.size());
  for (const auto& r : features) {
    const auto pred = predict(model, r.features);
    const Document* d = by_id.at(r.document_id);
    out.push_back({r.document_id, r.label, pred.label, pred.probability_machine, d->domain, d->generator, d->word_count});
  }
  return out;
}

inline void persist(const ExperimentConfig& config, const ExperimentResult& result) {
  if (config.output_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  const fs::path dir(config.output_dir);
  auto with_config = [&](const std::vector<FeatureRecord>& records) {
    std::string out;
    for (const auto& r : records) {
      std::string line = serialize_feature_record(r);
      line.pop_back();  // closing brace
      out += line + ",\"config_fingerprint\":\"" + result.report.config_fingerprint + "\"}\n";
    }
    return out;
  };
  write_file((dir / "features_train.jsonl").string(), with_config(result.train_features));
  write_file((dir / "features_test.jsonl").string(), with_config(result.test_features));
  std::string model = serialize_model(result.model);
  write_file((dir / "model.txt").string(), model);
  write_file((dir / "model.config").string(), result.report.config_fingerprint + "\n");
  write_file((dir / "report.jsonl").string(), serialize_report(result.report));
  write_file((dir / "report.txt").string(), format_report_table(result.report));
  std::vector<FeatureRecord> all = result.train_features;
  all.insert(all.end(), result.test_features.begin(), result.test_features.end());
  write_file((dir / "feature_histograms.tsv").string(), feature_histograms(all));
}

inline ExperimentResult train_and_evaluate(const Corpus& train_docs, const Corpus& test_docs,
                                           const PromptCatalog& catalog, Rewriter& rewriter,
                                           const ExperimentConfig& config, std::string config_fingerprint,
                                           std::map<std::string, std::string> tags) {
  if (test_docs.empty()) throw Error(ErrorCode::kInvalidArgument, "test set is empty");
  ExperimentResult result;
  result.train_features = extract_corpus_strict(train_docs, catalog, rewriter, config.features, config.workers);
  result.test_features = extract_corpus_strict(test_docs, catalog, rewriter, config.features, config.workers);
  result.model = train(result.train_features, config.train);
  const auto scored = score_documents(result.model, test_docs, result.test_features);
  result.report = f1_report(scored, config.slices);
  result.report.config_fingerprint = std::move(config_fingerprint);
  result.report.tags = std::move(tags);
  persist(config, result);
  return result;
}

template <typename F>
auto with_experiment_context(std::string_view protocol, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw e.with_context("experiment " + std::string(protocol));
  }
}

}  // namespace detail

/// Train and test on one corpus split by `config.split`.
inline ExperimentResult run_in_domain(const Corpus& corpus, const PromptCatalog& catalog, Rewriter& rewriter,
                                      const ExperimentConfig& config) {
  return detail::with_experiment_context("in_domain", [&] {
    const bool has_machine = std::any_of(corpus.begin(), corpus.end(), [](const Document& d) { return d.label == Label::kMachine; });
    const bool has_human = std::any_of(corpus.begin(), corpus.end(), [](const Document& d) { return d.label == Label::kHuman; });
    if (!has_machine || !has_human) throw Error(ErrorCode::kDegenerateLabels, "corpus contains a single class");
    auto [train_docs, test_docs] = split(corpus, config.split);
    auto fp = experiment_fingerprint("in_domain", catalog, config).add("corpus", corpus_fingerprint(corpus)).hex();
    return detail::train_and_evaluate(train_docs, test_docs, catalog, rewriter, config, fp,
                                      {{"protocol", "in_domain"}, {"scheme", std::string(to_string(config.features.scheme))}});
  });
}

/// In-domain run with per-length-bucket slices.
inline ExperimentResult run_length(const Corpus& corpus, const PromptCatalog& catalog, Rewriter& rewriter,
                                   ExperimentConfig config) {
  config.slices.by_length = true;
  auto result = run_in_domain(corpus, catalog, rewriter, config);
  result.report.tags["protocol"] = "length";
  return result;
}

struct NamedCorpus {
  std::string name;
  Corpus documents;
};

/// Train on the union of `train_corpora`, test on the held-out corpus.
inline ExperimentResult run_ood(const std::vector<NamedCorpus>& train_corpora, const NamedCorpus& test_corpus,
                                const PromptCatalog& catalog, Rewriter& rewriter, const ExperimentConfig& config) {
  return detail::with_experiment_context("ood", [&] {
    if (test_corpus.documents.empty()) throw Error(ErrorCode::kInvalidArgument, "test corpus is empty");
    std::set<std::string> test_ids;
    for (const auto& d : test_corpus.documents) test_ids.insert(d.id);
    Corpus train_docs;
    std::string sources;
    for (const auto& c : train_corpora) {
      for (const auto& d : c.documents) {
        if (test_ids.count(d.id)) {
          throw Error(ErrorCode::kOverlapDetected, "document '" + d.id + "' is in both '" + c.name + "' and '" +
                                                       test_corpus.name + "'");
        }
        train_docs.push_back(d);
      }
      sources += (sources.empty() ? "" : "+") + c.name;
    }
    auto fpb = experiment_fingerprint("ood", catalog, config);
    for (const auto& c : train_corpora) fpb.add("train:" + c.name, corpus_fingerprint(c.documents));
    fpb.add("test:" + test_corpus.name, corpus_fingerprint(test_corpus.documents));
    return detail::train_and_evaluate(train_docs, test_corpus.documents, catalog, rewriter, config, fpb.hex(),
                                      {{"protocol", "ood"},
                                       {"scheme", std::string(to_string(config.features.scheme))},
                                       {"source", sources},
                                       {"target", test_corpus.name}});
  });
}

/// Stands for the machine text as originally generated, without an evasion prompt.
inline constexpr std::string_view kNoAdaptivePrompt = "none";

struct AdaptiveSpec {
  std::vector<std::string> train_prompt_ids;
  std::vector<std::string> test_prompt_ids;
  /// Pre-generated variants: prompt id -> machine document id -> text.
  std::map<std::string, std::map<std::string, std::string>> variants;
  /// Produces missing variants; none means variants must be pre-generated.
  Rewriter* variant_generator = nullptr;
};

/// Variant document ids are "<document id>@<prompt id>".
inline std::string variant_id(std::string_view document_id, std::string_view prompt_id) {
  return std::string(document_id) + "@" + std::string(prompt_id);
}

/// Detector trained on machine-text variants from the train prompt set and
/// evaluated on variants from the (disjoint) test prompt set. Human
/// documents are used unchanged on both sides.
inline ExperimentResult run_adaptive(const Corpus& corpus, const PromptCatalog& catalog, Rewriter& rewriter,
                                     const AdaptiveSpec& spec, const ExperimentConfig& config) {
  return detail::with_experiment_context("adaptive", [&] {
    if (spec.train_prompt_ids.empty() || spec.test_prompt_ids.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "adaptive protocol needs train and test prompt ids");
    }
    for (const auto& id : spec.train_prompt_ids) {
      if (std::find(spec.test_prompt_ids.begin(), spec.test_prompt_ids.end(), id) != spec.test_prompt_ids.end()) {
        throw Error(ErrorCode::kInvalidArgument, "prompt '" + id + "' is in both train and test sets");
      }
    }
    auto [train_split, test_split] = split(corpus, config.split);

    auto variant_text = [&](const Document& d, const std::string& pid) -> std::string {
      if (pid == kNoAdaptivePrompt) return d.text;
      if (auto it = spec.variants.find(pid); it != spec.variants.end()) {
        if (auto jt = it->second.find(d.id); jt != it->second.end()) return jt->second;
      }
      if (!spec.variant_generator) {
        throw Error(ErrorCode::kMissingVariant, "no variant of '" + d.id + "' for prompt '" + pid + "'");
      }
      const RewritePrompt* p = catalog.find(pid);
      if (!p) throw Error(ErrorCode::kInvalidArgument, "unknown evasion prompt '" + pid + "'");
      CompletionRequest req;
      req.model_name = config.features.model_name;
      req.prompt_text = compose(*p, d.text);
      req.temperature = config.features.rewrite_temperature;
      req.max_output_tokens = config.features.max_output_tokens;
      auto resp = spec.variant_generator->complete(req);
      if (is_blank(resp.text)) throw Error(ErrorCode::kEmptyCompletion, "blank variant of '" + d.id + "' for '" + pid + "'");
      return resp.text;
    };
    auto build = [&](const Corpus& docs, const std::vector<std::string>& pids) {
      Corpus out;
      for (const auto& d : docs) {
        if (d.label == Label::kHuman) out.push_back(d);
      }
      for (const auto& pid : pids) {
        for (const auto& d : docs) {
          if (d.label != Label::kMachine) continue;
          out.push_back(make_document(variant_id(d.id, pid), variant_text(d, pid), d.label, d.domain,
                                      pid == kNoAdaptivePrompt ? d.generator : d.generator + "+" + pid));
        }
      }
      return out;
    };
    const Corpus train_docs = build(train_split, spec.train_prompt_ids);
    const Corpus test_docs = build(test_split, spec.test_prompt_ids);

    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
      return s;
    };
    auto fpb = experiment_fingerprint("adaptive", catalog, config);
    fpb.add("corpus", corpus_fingerprint(corpus))
        .add("train_prompts", join(spec.train_prompt_ids))
        .add("test_prompts", join(spec.test_prompt_ids))
        .add("train_docs", corpus_fingerprint(train_docs))
        .add("test_docs", corpus_fingerprint(test_docs));
    return detail::train_and_evaluate(train_docs, test_docs, catalog, rewriter, config, fpb.hex(),
                                      {{"protocol", "adaptive"},
                                       {"scheme", std::string(to_string(config.features.scheme))},
                                       {"train_prompts", join(spec.train_prompt_ids)},
                                       {"test_prompts", join(spec.test_prompt_ids)}});
  });
}

/// Mean of the similarity (D) half of each vector, split by label; the
/// per-document summary compared by the significance test.
inline std::pair<std::vector<double>, std::vector<double>> mean_similarity_by_label(
    std::span<const FeatureRecord> records) {
  std::vector<double> human, machine;
  for (const auto& r : records) {
    const auto& v = r.features.values;
    const std::size_t half = v.size() / 2;
    double s = 0.0;
    for (std::size_t i = half; i < v.size(); ++i) s += v[i];
    const double mean = v.size() > half ? s / static_cast<double>(v.size() - half) : 0.0;
    (r.label == Label::kMachine ? machine : human).push_back(mean);
  }
  return {std::move(human), std::move(machine)};
}

}  // namespace redit
