#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "redit/corpus.hpp"

using redit::ErrorCode;
using redit::Label;

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

std::string record(const std::string& id, const std::string& label, const std::string& text) {
  return "{\"id\":\"" + id + "\",\"label\":\"" + label + "\",\"domain\":\"d\",\"generator\":\"g\",\"text\":\"" + text +
         "\"}\n";
}

redit::Corpus balanced(std::size_t per_label) {
  redit::Corpus c;
  for (std::size_t i = 0; i < 2 * per_label; ++i) {
    c.push_back(redit::make_document("doc" + std::to_string(i), "some words here", i % 2 ? Label::kMachine : Label::kHuman,
                                     "d", "g"));
  }
  return c;
}

}  // namespace

TEST_CASE("parse corpus", "[corpus]") {
  const auto c = redit::parse_corpus(record("a", "human", "Hello there, friend.") + record("b", "machine", "Hi"));
  REQUIRE(c.size() == 2);
  CHECK(c[0].word_count == 3);
  CHECK(c[1].label == Label::kMachine);
  CHECK(redit::parse_corpus(redit::serialize_corpus(c)) == c);

  CHECK(code_of([] { redit::parse_corpus(record("a", "human", "x") + record("a", "human", "y")); }) ==
        ErrorCode::kDuplicateId);
  CHECK(redit::parse_corpus(record("a", "human", "x") + record("b", "human", "y") + record("c", "machine", "z")).size() == 3);
  CHECK(code_of([] { redit::parse_corpus(record("a", "robot", "x")); }) == ErrorCode::kParseError);
  try {
    redit::parse_corpus(record("a", "human", "x") + "{\"id\":\"doc-9\",\"domain\":\"d\",\"generator\":\"g\",\"text\":\"t\"}\n");
    FAIL("expected ParseError");
  } catch (const redit::Error& e) {
    CHECK(std::string(e.what()).find("doc-9") != std::string::npos);
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }
  CHECK(code_of([] { redit::parse_corpus("{\"id\":\"a\",\"label\":\"human\"}\n"); }) == ErrorCode::kParseError);
  CHECK(code_of([] { redit::load_corpus("/nonexistent.jsonl"); }) == ErrorCode::kParseError);
  try {
    redit::parse_corpus(record("a", "human", " ") + record("b", "human", "ok") + record("c", "human", "\\t"));
    FAIL("expected BlankDocument");
  } catch (const redit::Error& e) {
    CHECK(e.code() == ErrorCode::kBlankDocument);
    CHECK(std::string(e.what()).find("a, c") != std::string::npos);
  }
}

TEST_CASE("stratified split", "[corpus]") {
  const auto corpus = balanced(50);
  const auto [train, test] = redit::split(corpus, {0.8, 9, {redit::StratifyField::kLabel}});
  auto count = [](const redit::Corpus& c, Label l) {
    return std::count_if(c.begin(), c.end(), [&](const redit::Document& d) { return d.label == l; });
  };
  CHECK(count(train, Label::kHuman) == 40);
  CHECK(count(train, Label::kMachine) == 40);
  CHECK(count(test, Label::kHuman) == 10);
  CHECK(count(test, Label::kMachine) == 10);

  std::set<std::string> ids;
  for (const auto& d : train) ids.insert(d.id);
  for (const auto& d : test) CHECK(ids.insert(d.id).second);
  CHECK(ids.size() == corpus.size());

  const auto again = redit::split(corpus, {0.8, 9, {redit::StratifyField::kLabel}});
  CHECK(again.first == train);
  const auto other = redit::split(corpus, {0.8, 10, {redit::StratifyField::kLabel}});
  CHECK(other.first != train);

  auto tiny = balanced(5);
  tiny.push_back(redit::make_document("lonely", "x", Label::kHuman, "rare", "g"));
  CHECK(code_of([&] { redit::split(tiny, {0.8, 1, {redit::StratifyField::kDomain}}); }) == ErrorCode::kStratumTooSmall);
}

TEST_CASE("length buckets", "[corpus]") {
  redit::Corpus c;
  for (std::size_t words : {0u, 5u, 10u, 24u, 25u, 199u, 200u, 1000u}) {
    std::string text;
    for (std::size_t i = 0; i < words; ++i) text += "w ";
    c.push_back(redit::make_document("n" + std::to_string(words), text.empty() ? "." : text, Label::kHuman, "d", "g"));
  }
  const auto buckets = redit::length_buckets(c, redit::kDefaultLengthEdges);
  REQUIRE(buckets.size() == 6);
  CHECK(buckets[0].name() == "[0,10)");
  CHECK(buckets[5].name() == "[200,inf)");
  CHECK(buckets[0].document_ids == std::vector<std::string>{"n0", "n5"});
  CHECK(buckets[1].document_ids == std::vector<std::string>{"n10", "n24"});
  CHECK(buckets[2].document_ids == std::vector<std::string>{"n25"});
  CHECK(buckets[4].document_ids == std::vector<std::string>{"n199"});
  CHECK(buckets[5].document_ids == std::vector<std::string>{"n200", "n1000"});

  const auto two = redit::length_buckets(c, {50});
  REQUIRE(two.size() == 2);
  CHECK(two[0].name() == "[0,50)");
  CHECK(two[1].name() == "[50,inf)");
  CHECK(code_of([&] { redit::length_buckets(c, {10, 10}); }) == ErrorCode::kInvalidArgument);

  const auto small = redit::length_buckets(c, {10, 25, 50});
  CHECK(small[2].name() == "[25,50)");
  CHECK(small[2].document_ids == std::vector<std::string>{"n25"});
  CHECK(small[1].contains(10));
  CHECK_FALSE(small[0].contains(10));
  CHECK(small[2].contains(30));
  for (const auto& b : redit::length_buckets({}, {10, 25, 50})) CHECK(b.document_ids.empty());
}

TEST_CASE("synthetic corpus", "[corpus]") {
  const auto c = redit::synth_corpus(200, 0.5, 42, 1000);
  REQUIRE(c.size() == 200);
  CHECK(c.front().id == "synth-000");
  std::size_t machine = 0;
  for (const auto& d : c) {
    const bool marked = d.text.find("zmachinez") != std::string::npos;
    CHECK(marked == (d.label == Label::kMachine));
    machine += d.label == Label::kMachine;
    CHECK(d.word_count >= 15);
  }
  CHECK(machine == 100);
  const auto hundred = redit::synth_corpus(100, 0.5, 7, 50);
  CHECK(std::count_if(hundred.begin(), hundred.end(), [](const redit::Document& d) { return d.label == Label::kMachine; }) == 50);
  CHECK(redit::synth_corpus(200, 0.5, 42, 1000) == c);
  CHECK(redit::synth_corpus(200, 0.5, 43, 1000) != c);
}

TEST_CASE("sample corpora in the repository load", "[corpus]") {
  const auto c = redit::load_corpus(std::string(REDIT_DATA_DIR) + "/sample_corpus.jsonl");
  CHECK(c.size() >= 10);
}
