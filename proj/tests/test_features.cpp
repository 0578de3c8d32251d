#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "oracles.hpp"
#include "redit/corpus.hpp"
#include "redit/features.hpp"
#include "redit/unicode.hpp"

using Catch::Approx;
using redit::ErrorCode;
using redit::FeatureConfig;
using redit::Scheme;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const redit::Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

FeatureConfig scheme(Scheme s) {
  FeatureConfig c;
  c.scheme = s;
  return c;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

TEST_CASE("identity rewriter gives all-ones vectors", "[features]") {
  const auto catalog = redit::builtin_catalog();
  redit::IdentityRewriter id;
  const std::string doc = "The quick brown fox jumps over the lazy dog.";
  for (auto s : {Scheme::kInvariance, Scheme::kEquivariance, Scheme::kUncertainty}) {
    auto cfg = scheme(s);
    const auto fv = redit::extract(doc, catalog, id, cfg);
    CHECK(fv.scheme == s);
    CHECK(fv.values.size() == redit::feature_dimension(s, redit::scheme_k(catalog, cfg)));
    for (double v : fv.values) CHECK(v == 1.0);
  }
}

TEST_CASE("zero-edit cases", "[features]") {
  const auto catalog = redit::builtin_catalog();
  redit::IdentityRewriter id;
  auto original = scheme(Scheme::kEquivariance);
  original.reference = redit::EquivarianceReference::kOriginal;
  for (double v : redit::extract_equivariance("some text here", catalog, id, original).values) CHECK(v == 1.0);
  auto unc = scheme(Scheme::kUncertainty);
  unc.uncertainty_samples = 3;
  CHECK(redit::extract_uncertainty("some text here", catalog, id, unc).values == std::vector<double>(6, 1.0));
}

TEST_CASE("feature shapes", "[features]") {
  const auto catalog = redit::builtin_catalog();
  redit::IdentityRewriter id;
  CHECK(redit::extract_invariance("a b c", catalog, id).values.size() == 6);
  CHECK(redit::extract_equivariance("a b c", catalog, id).values.size() == 4);
  auto cfg = scheme(Scheme::kUncertainty);
  cfg.uncertainty_samples = 4;
  CHECK(redit::extract_uncertainty("a b c", catalog, id, cfg).values.size() == 12);

  const redit::RewritePrompt p{"p", "Rewrite this for me:", redit::PromptKind::kInvariance, ""};
  CHECK(redit::extract_uncertainty("a b c", p, id, 5).values.size() == 20);
  CHECK(code_of([&] { redit::extract_uncertainty("a b c", p, id, 1); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("empty catalog and blank documents are rejected", "[features]") {
  redit::PromptCatalog empty;
  empty.version = "empty";
  redit::IdentityRewriter id;
  CHECK(code_of([&] { redit::extract_invariance("x", empty, id); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { redit::extract_equivariance("x", empty, id); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { redit::extract_invariance("  ", redit::builtin_catalog(), id); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("full edits zero the overlap", "[features]") {
  redit::MockRewriterConfig cfg;
  cfg.edit_rate_human = 1.0;
  cfg.edit_rate_machine = 0.0;
  redit::MockRewriter mock(cfg);
  const auto catalog = redit::builtin_catalog();
  const std::string doc = "w1 w2 w3 w4 w5 w6 w7 w8";
  std::vector<redit::RewriteRecord> records;
  const auto fv = redit::extract_invariance(doc, catalog, mock, {}, "d", &records);
  REQUIRE(records.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(fv.values[k] == 0.0);
    const auto a = redit::unicode::decode(doc), b = redit::unicode::decode(records[k].text);
    const double expected = 1.0 - static_cast<double>(oracle::memo_edit_distance(a, b)) /
                                      static_cast<double>(std::max(a.size(), b.size()));
    CHECK(fv.values[3 + k] == Approx(expected).epsilon(1e-12));
    CHECK(fv.values[3 + k] < 1.0);
  }
}

TEST_CASE("equivariance reference choice matters", "[features]") {
  redit::MockRewriterConfig mc;
  mc.edit_rate_human = 0.3;
  mc.edit_rate_machine = 0.0;
  redit::MockRewriter mock(mc);
  const auto catalog = redit::builtin_catalog();
  const std::string doc = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19 w20";
  auto direct = scheme(Scheme::kEquivariance);
  auto original = direct;
  original.reference = redit::EquivarianceReference::kOriginal;
  const auto a = redit::extract_equivariance(doc, catalog, mock, direct);
  const auto b = redit::extract_equivariance(doc, catalog, mock, original);
  CHECK(a.values != b.values);
  CHECK(a.schema_fingerprint != b.schema_fingerprint);
}

TEST_CASE("uncertainty compares distinct samples only", "[features]") {
  redit::MockRewriter mock({});
  const auto catalog = redit::builtin_catalog();
  auto cfg = scheme(Scheme::kUncertainty);
  cfg.uncertainty_samples = 3;
  std::vector<redit::RewriteRecord> records;
  const auto fv = redit::extract_uncertainty("w1 w2 w3 w4 w5 w6 w7 w8 w9 w10", catalog, mock, cfg, "d", &records);
  REQUIRE(records.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(records[k].sample_index == k);
  REQUIRE(fv.values.size() == 6);
  // Pairs in order (0,1), (0,2), (1,2).
  CHECK(fv.values[3] == Approx(redit::levenshtein_similarity(records[0].text, records[1].text).value()));
  CHECK(fv.values[4] == Approx(redit::levenshtein_similarity(records[0].text, records[2].text).value()));
  CHECK(fv.values[5] == Approx(redit::levenshtein_similarity(records[1].text, records[2].text).value()));
  for (double v : fv.values) CHECK(v < 1.0);
}

TEST_CASE("more edits means lower features", "[features][property]") {
  const auto corpus = redit::synth_corpus(100, 0.5, 21, 400);
  const auto catalog = redit::builtin_catalog();
  redit::MockRewriterConfig light, heavy;
  light.edit_rate_human = 0.1;
  light.edit_rate_machine = 0.1 - 1e-9;
  heavy.edit_rate_human = 0.5;
  heavy.edit_rate_machine = 0.5 - 1e-9;
  redit::MockRewriter mock_light(light), mock_heavy(heavy);
  for (auto s : {Scheme::kInvariance, Scheme::kUncertainty}) {
    const auto a = redit::extract_corpus_strict(corpus, catalog, mock_light, scheme(s));
    const auto b = redit::extract_corpus_strict(corpus, catalog, mock_heavy, scheme(s));
    std::vector<double> ma, mb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma.push_back(mean(a[i].features.values));
      mb.push_back(mean(b[i].features.values));
    }
    CHECK(mean(ma) > mean(mb));
  }
}

TEST_CASE("schema fingerprint tracks every schema input", "[features]") {
  const auto catalog = redit::builtin_catalog();
  const auto base = redit::schema_fingerprint(catalog, {});
  CHECK(base == redit::schema_fingerprint(redit::builtin_catalog(), {}));
  auto c = FeatureConfig{};
  c.ngram = 2;
  CHECK(redit::schema_fingerprint(catalog, c) != base);
  c = scheme(Scheme::kUncertainty);
  const auto u5 = redit::schema_fingerprint(catalog, c);
  c.uncertainty_samples = 4;
  CHECK(redit::schema_fingerprint(catalog, c) != u5);
  auto other = catalog;
  other.prompts[0].text = "Polish it:";
  CHECK(redit::schema_fingerprint(other, {}) != base);
  // Rewriter settings do not shape the vector.
  c = FeatureConfig{};
  c.model_name = "another";
  CHECK(redit::schema_fingerprint(catalog, c) == base);
}

TEST_CASE("corpus extraction keeps corpus order regardless of workers", "[features]") {
  const auto corpus = redit::synth_corpus(60, 0.5, 4, 300);
  const auto catalog = redit::builtin_catalog();
  redit::MockRewriter mock({});
  const auto one = redit::extract_corpus_strict(corpus, catalog, mock, {}, 1);
  const auto many = redit::extract_corpus_strict(corpus, catalog, mock, {}, 8);
  REQUIRE(one.size() == corpus.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].document_id == corpus[i].id);
    CHECK(many[i].document_id == corpus[i].id);
    CHECK(one[i].features.values == many[i].features.values);
  }
}

TEST_CASE("feature files round trip exactly", "[features]") {
  const auto corpus = redit::synth_corpus(10, 0.5, 4, 300);
  redit::MockRewriter mock({});
  const auto recs = redit::extract_corpus_strict(corpus, redit::builtin_catalog(), mock, {});
  const auto back = redit::parse_features(redit::serialize_features(recs));
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].document_id == recs[i].document_id);
    CHECK(back[i].label == recs[i].label);
    CHECK(back[i].features.values == recs[i].features.values);
    CHECK(back[i].features.schema_fingerprint == recs[i].features.schema_fingerprint);
  }
  CHECK(code_of([] { redit::parse_features("{\"document_id\":1}\n"); }) == ErrorCode::kParseError);
}

TEST_CASE("rewriter failures carry document context", "[features]") {
  struct Failing final : redit::Rewriter {
    redit::CompletionResponse complete(const redit::CompletionRequest&) override {
      throw redit::Error(ErrorCode::kTransportError, "down");
    }
  } failing;
  try {
    redit::extract_invariance("x y", redit::builtin_catalog(), failing, {}, "doc-7");
    FAIL("expected an error");
  } catch (const redit::Error& e) {
    CHECK(e.code() == ErrorCode::kTransportError);
    CHECK(std::string(e.what()).find("doc-7") != std::string::npos);
    CHECK(std::string(e.what()).find("polish") != std::string::npos);
  }
  const auto res = redit::extract_corpus(redit::synth_corpus(4, 0.5, 1, 10), redit::builtin_catalog(), failing, {});
  CHECK(res.records.empty());
  CHECK(res.failures.size() == 4);
}

TEST_CASE("blank rewrites zero the affected comparison", "[features]") {
  struct Blank final : redit::Rewriter {
    redit::CompletionResponse complete(const redit::CompletionRequest&) override { return {"   ", "blank", false, 0}; }
  } blank;
  const auto fv = redit::extract_invariance("x y", redit::builtin_catalog(), blank);
  for (double v : fv.values) CHECK(v == 0.0);
}
