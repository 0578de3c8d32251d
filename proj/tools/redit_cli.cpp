// Command-line front end: rewrite, featurize, train, detect, eval, cache.
//
// Exit codes: 0 success (detect: human), 10 detect verdict machine,
// 1 runtime error, 2 usage or configuration error, 3 schema mismatch,
// 4 some documents failed (partial output kept).

#include <CLI11.hpp>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "redit/http_transport.hpp"
#include "redit/redit.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSchema = 3;
constexpr int kExitPartial = 4;
constexpr int kExitMachine = 10;

struct Options {
  std::vector<std::string> corpora;
  std::string test_corpus;
  std::string catalog = "builtin";
  std::string scheme = "invariance";
  std::string reference = "direct_rewrite";
  std::string uncertainty_prompt;
  std::string rewriter = "mock";
  std::string model_file;
  std::string features_file;
  std::string cache;
  std::string out;
  std::string base_url;
  std::string model_name;
  std::size_t k = 5;
  std::size_t ngram = 1;
  std::uint64_t seed = 0;
  double split = 0.8;
  std::size_t workers = 4;

  double mock_human_rate = 0.5;
  double mock_machine_rate = 0.1;
  std::uint64_t mock_seed = 0;
  std::vector<std::string> mock_evasion;    // prompt-id=rate
  std::vector<std::string> mock_identity;   // prompt ids

  double learning_rate = 0.1;
  int epochs = 500;
  double l2 = 1e-4;

  std::string protocol = "in_domain";
  std::vector<std::string> train_prompts;
  std::vector<std::string> test_prompts;
  std::string variants_file;

  std::string text;
  std::string input_file;

  std::size_t synth_size = 200;
  double synth_machine_fraction = 0.5;
  std::size_t synth_vocab = 1000;

  std::string log_level = "warn";
};

redit::PromptCatalog load_catalog(const Options& o) {
  return o.catalog == "builtin" ? redit::builtin_catalog() : redit::load_catalog(o.catalog);
}

redit::FeatureConfig feature_config(const Options& o, const std::string& model_name) {
  redit::FeatureConfig c;
  const auto scheme = redit::parse_scheme(o.scheme);
  if (!scheme) throw redit::Error(redit::ErrorCode::kConfigError, "unknown scheme '" + o.scheme + "'");
  c.scheme = *scheme;
  c.ngram = o.ngram;
  c.uncertainty_samples = o.k;
  c.uncertainty_prompt_id = o.uncertainty_prompt;
  if (o.reference == "original") {
    c.reference = redit::EquivarianceReference::kOriginal;
  } else if (o.reference != "direct_rewrite") {
    throw redit::Error(redit::ErrorCode::kConfigError, "unknown reference '" + o.reference + "'");
  }
  c.model_name = model_name;
  return c;
}

/// The configured rewriter behind a response cache.
struct RewriterStack {
  std::unique_ptr<redit::Rewriter> base;
  std::unique_ptr<redit::ResponseCache> cache;
  std::unique_ptr<redit::CachingRewriter> cached;
  std::string id;          // describes the rewriter for fingerprints
  std::string model_name;  // sent with requests

  redit::Rewriter& get() { return *cached; }
};

RewriterStack make_rewriter(const Options& o, const redit::PromptCatalog& catalog) {
  RewriterStack s;
  if (o.rewriter == "mock") {
    redit::MockRewriterConfig mc;
    mc.edit_rate_human = o.mock_human_rate;
    mc.edit_rate_machine = o.mock_machine_rate;
    mc.seed = o.mock_seed;
    s.id = "mock h=" + redit::format_real(mc.edit_rate_human) + " m=" + redit::format_real(mc.edit_rate_machine) +
           " seed=" + std::to_string(mc.seed);
    for (std::size_t i = 0; i < o.mock_evasion.size(); ++i) {
      const auto& spec = o.mock_evasion[i];
      const auto eq = spec.find('=');
      double rate = 0;
      if (eq == std::string::npos || !redit::parse_real(spec.substr(eq + 1), rate)) {
        throw redit::Error(redit::ErrorCode::kConfigError, "--mock-evasion expects prompt-id=rate, got '" + spec + "'");
      }
      const auto* p = catalog.find(spec.substr(0, eq));
      if (!p) throw redit::Error(redit::ErrorCode::kConfigError, "unknown prompt '" + spec.substr(0, eq) + "'");
      mc.evasion.push_back({p->text, "zevade" + std::to_string(i) + "z", rate});
      s.id += " evade:" + spec;
    }
    for (const auto& pid : o.mock_identity) {
      const auto* p = catalog.find(pid);
      if (!p) throw redit::Error(redit::ErrorCode::kConfigError, "unknown prompt '" + pid + "'");
      mc.identity_instructions.push_back(p->text);
      s.id += " identity:" + pid;
    }
    s.model_name = "mock";
    s.base = std::make_unique<redit::MockRewriter>(mc);
  } else if (o.rewriter == "identity") {
    s.id = "identity";
    s.model_name = "identity";
    s.base = std::make_unique<redit::IdentityRewriter>();
  } else if (o.rewriter == "remote") {
    auto ep = redit::EndpointConfig::from_env();
    if (!o.base_url.empty()) ep.base_url = o.base_url;
    if (!o.model_name.empty()) ep.model_name = o.model_name;
    if (ep.model_name.empty()) {
      throw redit::Error(redit::ErrorCode::kConfigError, "model name not set (REDIT_MODEL or --model-name)");
    }
    s.id = "remote " + ep.base_url + " " + ep.model_name;
    s.model_name = ep.model_name;
    s.base = std::make_unique<redit::ChatClient>(std::make_shared<redit::HttpTransport>(), ep, redit::RetryPolicy{},
                                                 redit::WrapperOptions{}, static_cast<int>(o.workers));
    redit::parse_url(ep.base_url);
  } else {
    throw redit::Error(redit::ErrorCode::kConfigError, "unknown rewriter '" + o.rewriter + "'");
  }
  s.cache = o.cache.empty() ? std::make_unique<redit::ResponseCache>() : std::make_unique<redit::ResponseCache>(o.cache);
  s.cached = std::make_unique<redit::CachingRewriter>(*s.base, *s.cache);
  return s;
}

redit::Corpus load_one_corpus(const Options& o) {
  if (o.corpora.size() != 1) throw redit::Error(redit::ErrorCode::kConfigError, "exactly one --corpus is required");
  return redit::load_corpus(o.corpora.front());
}

std::string run_fingerprint(const std::string& schema, const std::string& rewriter_id, const redit::FeatureConfig& c,
                            const redit::Corpus& corpus) {
  return redit::FingerprintBuilder()
      .add("schema", schema)
      .add("rewriter", rewriter_id)
      .add("model_name", c.model_name)
      .add("rewrite_temperature", c.rewrite_temperature)
      .add("sample_temperature", c.sample_temperature)
      .add("max_output_tokens", static_cast<long long>(c.max_output_tokens))
      .add("corpus", redit::corpus_fingerprint(corpus))
      .hex();
}

/// Refuses to write into a directory that holds artifacts of another run.
void guard_output_dir(const std::string& dir, const std::string& fingerprint) {
  const auto marker = std::filesystem::path(dir) / "model.config";
  if (!std::filesystem::exists(marker)) return;
  const auto lines = redit::split_lines(redit::read_file(marker.string()));
  if (lines.empty() || lines.front() != fingerprint) {
    throw redit::Error(redit::ErrorCode::kConfigError,
                       "'" + dir + "' holds artifacts from a different configuration; use another --out");
  }
}

// ---------------------------------------------------------------------------

int cmd_rewrite(const Options& o) {
  const auto catalog = load_catalog(o);
  auto rw = make_rewriter(o, catalog);
  const auto fc = feature_config(o, rw.model_name);
  const auto corpus = load_one_corpus(o);
  const auto before = rw.cache->size();
  auto result = redit::extract_corpus(corpus, catalog, rw.get(), fc, o.workers, true);
  std::string lines;
  for (const auto& r : result.rewrites) lines += redit::serialize_rewrite_record(r) + "\n";
  redit::write_file(o.out, lines);
  std::printf("rewrites %zu  requests %lld  cached %lld  new cache entries %zu  failed documents %zu\n",
              result.rewrites.size(), static_cast<long long>(rw.cached->hits() + rw.cached->misses()),
              static_cast<long long>(rw.cached->hits()), rw.cache->size() - before, result.failures.size());
  for (const auto& f : result.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return result.failures.empty() ? 0 : kExitPartial;
}

int cmd_featurize(const Options& o) {
  const auto catalog = load_catalog(o);
  auto rw = make_rewriter(o, catalog);
  const auto fc = feature_config(o, rw.model_name);
  const auto corpus = load_one_corpus(o);
  auto result = redit::extract_corpus(corpus, catalog, rw.get(), fc, o.workers);
  const auto fp = run_fingerprint(redit::schema_fingerprint(catalog, fc), rw.id, fc, corpus);
  std::string out;
  for (const auto& r : result.records) {
    std::string line = redit::serialize_feature_record(r);
    line.pop_back();
    out += line + ",\"config_fingerprint\":\"" + fp + "\"}\n";
  }
  redit::write_file(o.out, out);
  std::printf("featurized %zu of %zu documents (%s)\n", result.records.size(), corpus.size(), o.scheme.c_str());
  for (const auto& f : result.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return result.failures.empty() ? 0 : kExitPartial;
}

int cmd_train(const Options& o) {
  const auto content = redit::read_file(o.features_file);
  std::optional<std::string> config_fp;
  for (const auto& line : redit::split_lines(content)) {
    if (redit::is_blank(line)) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    const std::string fp = j.is_object() ? j.value("config_fingerprint", std::string()) : std::string();
    if (config_fp && *config_fp != fp) {
      throw redit::Error(redit::ErrorCode::kConfigError, "feature file mixes records from different configurations");
    }
    config_fp = fp;
  }
  const auto records = redit::parse_features(content, o.features_file);
  redit::TrainConfig tc{o.learning_rate, o.epochs, o.l2, o.seed};
  const auto model = redit::train(records, tc);
  redit::save_model(model, o.model_file);
  std::size_t correct = 0;
  for (const auto& r : records) correct += (redit::predict(model, r.features).label == r.label);
  std::printf("trained on %zu records, dimension %zu, training accuracy %.4f\n", records.size(), model.dimension(),
              static_cast<double>(correct) / static_cast<double>(records.size()));
  return 0;
}

int cmd_detect(const Options& o) {
  const auto model = redit::load_model(o.model_file);
  const auto catalog = load_catalog(o);
  auto rw = make_rewriter(o, catalog);
  const auto fc = feature_config(o, rw.model_name);
  if (redit::schema_fingerprint(catalog, fc) != model.schema_fingerprint) {
    throw redit::Error(redit::ErrorCode::kSchemaMismatch,
                       "model was trained with a different catalog, scheme or feature settings");
  }
  std::vector<std::string> inputs;
  if (!o.input_file.empty()) {
    for (auto& line : redit::split_lines(redit::read_file(o.input_file))) {
      if (!redit::is_blank(line)) inputs.push_back(std::move(line));
    }
  } else {
    inputs.push_back(o.text);
  }
  bool any_machine = false;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto fv = redit::extract(inputs[i], catalog, rw.get(), fc, "input-" + std::to_string(i + 1));
    const auto p = redit::predict(model, fv);
    any_machine |= p.label == redit::Label::kMachine;
    std::string vec;
    for (double v : fv.values) vec += (vec.empty() ? "" : ",") + redit::format_real(v);
    std::printf("%s\t%.6f\t[%s]\n", std::string(redit::to_string(p.label)).c_str(), p.probability_machine, vec.c_str());
  }
  return any_machine ? kExitMachine : 0;
}

std::vector<std::string> split_ids(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::size_t start = 0;
    while (start <= r.size()) {
      const auto comma = r.find(',', start);
      const auto part = r.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

int cmd_eval(const Options& o) {
  const auto catalog = load_catalog(o);
  auto rw = make_rewriter(o, catalog);
  redit::ExperimentConfig ec;
  ec.features = feature_config(o, rw.model_name);
  ec.train = {o.learning_rate, o.epochs, o.l2, o.seed};
  ec.split.train_fraction = o.split;
  ec.split.seed = o.seed;
  ec.workers = o.workers;
  ec.rewriter_id = rw.id;

  redit::ExperimentResult result;
  auto run = [&](const redit::ExperimentConfig& cfg) -> redit::ExperimentResult {
    if (o.protocol == "in_domain" || o.protocol == "length") {
      const auto corpus = load_one_corpus(o);
      return o.protocol == "length" ? redit::run_length(corpus, catalog, rw.get(), cfg)
                                    : redit::run_in_domain(corpus, catalog, rw.get(), cfg);
    }
    if (o.protocol == "ood") {
      if (o.corpora.empty() || o.test_corpus.empty()) {
        throw redit::Error(redit::ErrorCode::kConfigError, "ood needs --corpus (one or more) and --test-corpus");
      }
      std::vector<redit::NamedCorpus> train;
      for (const auto& p : o.corpora) train.push_back({std::filesystem::path(p).stem().string(), redit::load_corpus(p)});
      const redit::NamedCorpus test{std::filesystem::path(o.test_corpus).stem().string(), redit::load_corpus(o.test_corpus)};
      return redit::run_ood(train, test, catalog, rw.get(), cfg);
    }
    if (o.protocol == "adaptive") {
      redit::AdaptiveSpec spec;
      spec.train_prompt_ids = split_ids(o.train_prompts);
      spec.test_prompt_ids = split_ids(o.test_prompts);
      if (!o.variants_file.empty()) {
        for (const auto& line : redit::split_lines(redit::read_file(o.variants_file))) {
          if (redit::is_blank(line)) continue;
          const auto j = nlohmann::json::parse(line);
          spec.variants[j.at("prompt_id").get<std::string>()][j.at("document_id").get<std::string>()] =
              j.at("text").get<std::string>();
        }
      } else {
        spec.variant_generator = &rw.get();
      }
      return redit::run_adaptive(load_one_corpus(o), catalog, rw.get(), spec, cfg);
    }
    throw redit::Error(redit::ErrorCode::kConfigError, "unknown protocol '" + o.protocol + "'");
  };

  if (!o.out.empty()) {
    // The fingerprint depends on the protocol inputs, so the directory is
    // checked once the run has produced it and before anything is written.
    result = run(ec);
    guard_output_dir(o.out, result.report.config_fingerprint);
    ec.output_dir = o.out;
    redit::detail::persist(ec, result);
  } else {
    result = run(ec);
  }
  std::fputs(redit::format_report_table(result.report).c_str(), stdout);
  return 0;
}

int cmd_cache_inspect(const Options& o) {
  if (o.cache.empty()) throw redit::Error(redit::ErrorCode::kConfigError, "--cache is required");
  if (!std::filesystem::exists(o.cache)) throw redit::Error(redit::ErrorCode::kParseError, "no cache at '" + o.cache + "'");
  const redit::ResponseCache cache(o.cache);
  std::map<std::string, std::size_t> by_model;
  std::map<std::string, std::size_t> by_temperature;
  for (const auto& e : cache.entries()) {
    ++by_model[e.request.model_name];
    ++by_temperature[redit::format_real(e.request.temperature)];
  }
  std::printf("entries %zu\n", cache.size());
  for (const auto& [m, n] : by_model) std::printf("model %s %zu\n", m.c_str(), n);
  for (const auto& [t, n] : by_temperature) std::printf("temperature %s %zu\n", t.c_str(), n);
  return 0;
}

int cmd_synth(const Options& o) {
  redit::save_corpus(redit::synth_corpus(o.synth_size, o.synth_machine_fraction, o.seed, o.synth_vocab), o.out);
  std::printf("wrote %zu documents to %s\n", o.synth_size, o.out.c_str());
  return 0;
}

int cmd_catalog(const Options& o) {
  const auto catalog = load_catalog(o);
  if (o.out.empty()) {
    std::fputs(redit::serialize_catalog(catalog).c_str(), stdout);
  } else {
    redit::save_catalog(catalog, o.out);
  }
  return 0;
}

int exit_code_for(const redit::Error& e) {
  switch (e.code()) {
    case redit::ErrorCode::kSchemaMismatch: return kExitSchema;
    case redit::ErrorCode::kConfigError: return kExitConfig;
    default: return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Detect machine-generated text from how much a language model edits it when asked to rewrite it."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "redit 1.0.0");

  auto add_catalog = [&](CLI::App* c) {
    c->add_option("--catalog", o.catalog, "Prompt catalog file, or 'builtin'")->capture_default_str();
  };
  auto add_features = [&](CLI::App* c) {
    add_catalog(c);
    c->add_option("--scheme", o.scheme, "invariance | equivariance | uncertainty")
        ->check(CLI::IsMember({"invariance", "equivariance", "uncertainty"}))
        ->capture_default_str();
    c->add_option("--k", o.k, "Samples for the uncertainty scheme")->capture_default_str();
    c->add_option("--ngram", o.ngram, "n for the bag-of-n-grams overlap")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--reference", o.reference, "Equivariance reference: direct_rewrite | original")->capture_default_str();
    c->add_option("--uncertainty-prompt", o.uncertainty_prompt, "Prompt id sampled by the uncertainty scheme");
  };
  auto add_rewriter = [&](CLI::App* c) {
    c->add_option("--rewriter", o.rewriter, "remote | mock | identity")
        ->check(CLI::IsMember({"remote", "mock", "identity"}))
        ->capture_default_str();
    c->add_option("--cache", o.cache, "Response cache file (line-delimited JSON)");
    c->add_option("--workers", o.workers, "Concurrent rewrite requests")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--base-url", o.base_url, "Endpoint base URL (default: $REDIT_BASE_URL)");
    c->add_option("--model-name", o.model_name, "Rewriting model (default: $REDIT_MODEL)");
    c->add_option("--mock-human-rate", o.mock_human_rate, "Mock edit rate for unmarked text")->capture_default_str();
    c->add_option("--mock-machine-rate", o.mock_machine_rate, "Mock edit rate for marked text")->capture_default_str();
    c->add_option("--mock-seed", o.mock_seed, "Mock rewriter seed")->capture_default_str();
    c->add_option("--mock-evasion", o.mock_evasion, "prompt-id=rate: mock treats this prompt as an evasion rewrite");
    c->add_option("--mock-identity", o.mock_identity, "Prompt ids the mock answers with the input unchanged");
  };
  auto add_training = [&](CLI::App* c) {
    c->add_option("--learning-rate", o.learning_rate)->capture_default_str();
    c->add_option("--epochs", o.epochs)->capture_default_str();
    c->add_option("--l2", o.l2)->capture_default_str();
  };

  auto* rewrite = app.add_subcommand("rewrite", "Run every rewrite a scheme needs and record them");
  rewrite->add_option("--corpus", o.corpora, "Corpus file")->required();
  rewrite->add_option("--out", o.out, "Rewrite records output")->required();
  add_features(rewrite);
  add_rewriter(rewrite);

  auto* featurize = app.add_subcommand("featurize", "Extract feature vectors for a corpus");
  featurize->add_option("--corpus", o.corpora, "Corpus file")->required();
  featurize->add_option("--out", o.out, "Feature file output")->required();
  add_features(featurize);
  add_rewriter(featurize);

  auto* train = app.add_subcommand("train", "Fit the detector on a feature file");
  train->add_option("--features", o.features_file, "Feature file from 'featurize'")->required();
  train->add_option("--model-file", o.model_file, "Model output")->required();
  train->add_option("--seed", o.seed)->capture_default_str();
  add_training(train);

  auto* detect = app.add_subcommand("detect", "Classify text; exit 0 = human, 10 = machine");
  detect->add_option("--model-file", o.model_file, "Trained model")->required();
  auto* text_opt = detect->add_option("--text", o.text, "Text to classify");
  auto* input_opt = detect->add_option("--input", o.input_file, "File with one text per line");
  text_opt->excludes(input_opt);
  add_features(detect);
  add_rewriter(detect);

  auto* eval = app.add_subcommand("eval", "Run an evaluation protocol and report F1");
  eval->add_option("--protocol", o.protocol, "in_domain | ood | adaptive | length")
      ->check(CLI::IsMember({"in_domain", "ood", "adaptive", "length"}))
      ->capture_default_str();
  eval->add_option("--corpus", o.corpora, "Corpus file (ood: training corpora, repeatable)")->required();
  eval->add_option("--test-corpus", o.test_corpus, "Held-out corpus for ood");
  eval->add_option("--train-prompts", o.train_prompts, "Adaptive: evasion prompt ids for training ('none' = as generated)");
  eval->add_option("--test-prompts", o.test_prompts, "Adaptive: evasion prompt ids for testing");
  eval->add_option("--variants", o.variants_file, "Adaptive: pre-generated variants file");
  eval->add_option("--seed", o.seed, "Split and training seed")->capture_default_str();
  eval->add_option("--split", o.split, "Training fraction")->capture_default_str();
  eval->add_option("--out", o.out, "Directory for features, model and report");
  add_features(eval);
  add_rewriter(eval);
  add_training(eval);

  auto* cache = app.add_subcommand("cache", "Response cache tools");
  cache->require_subcommand(1);
  auto* inspect = cache->add_subcommand("inspect", "Summarize a cache file");
  inspect->add_option("--cache", o.cache, "Cache file")->required();

  auto* synth = app.add_subcommand("synth", "Write the synthetic offline corpus");
  synth->add_option("--out", o.out)->required();
  synth->add_option("--size", o.synth_size)->capture_default_str();
  synth->add_option("--machine-fraction", o.synth_machine_fraction)->capture_default_str();
  synth->add_option("--vocab", o.synth_vocab)->capture_default_str();
  synth->add_option("--seed", o.seed)->capture_default_str();

  auto* catalog = app.add_subcommand("catalog", "Print or save a prompt catalog");
  add_catalog(catalog);
  catalog->add_option("--out", o.out);

  app.add_option("--log-level", o.log_level, "trace | debug | info | warn | error | off")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("redit"));
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    if (*rewrite) return cmd_rewrite(o);
    if (*featurize) return cmd_featurize(o);
    if (*train) return cmd_train(o);
    if (*detect) return cmd_detect(o);
    if (*eval) return cmd_eval(o);
    if (*inspect) return cmd_cache_inspect(o);
    if (*synth) return cmd_synth(o);
    if (*catalog) return cmd_catalog(o);
  } catch (const redit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
