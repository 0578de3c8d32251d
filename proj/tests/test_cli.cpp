#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <string>

#include "redit/textio.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
};

/// Runs the CLI through the shell with stderr folded into the output.
Run cli(const std::string& args) {
  const std::string cmd = "env -u REDIT_BASE_URL -u REDIT_API_KEY -u REDIT_MODEL " + std::string(REDIT_CLI_PATH) +
                          " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

struct Workspace {
  Workspace() {
    dir = fs::temp_directory_path() / "redit_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    corpus = (dir / "corpus.jsonl").string();
    REQUIRE(cli("synth --out " + corpus + " --size 120 --seed 5").status == 0);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
  std::string corpus;
};

Workspace& ws() {
  static Workspace w;
  return w;
}

std::string trained_model() {
  static const std::string model = [] {
    const auto feats = ws().path("features.jsonl");
    const auto model = ws().path("model.txt");
    REQUIRE(cli("featurize --corpus " + ws().corpus + " --out " + feats).status == 0);
    REQUIRE(cli("train --features " + feats + " --model-file " + model).status == 0);
    return model;
  }();
  return model;
}

}  // namespace

TEST_CASE("featurize, train and detect", "[cli]") {
  const auto model = trained_model();
  const auto human = cli("detect --model-file " + model + " --text \"w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12\"");
  CHECK(human.status == 0);
  CHECK(human.out.rfind("human\t", 0) == 0);
  const auto machine =
      cli("detect --model-file " + model + " --text \"w1 w2 w3 w4 w5 zmachinez w6 w7 w8 w9 w10 w11 w12\"");
  CHECK(machine.status == 10);
  CHECK(machine.out.rfind("machine\t", 0) == 0);
}

TEST_CASE("detect over a file keeps input order", "[cli]") {
  const auto model = trained_model();
  const auto inputs = ws().path("inputs.txt");
  redit::write_file(inputs, "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10\nw3 zmachinez w4 w5 w6 w7 w8 w9 w10 w11\nw9 w8 w7 w6 w5 w4 w3 w2 w1 w0\n");
  const auto r = cli("detect --model-file " + model + " --input " + inputs);
  CHECK(r.status == 10);
  const auto lines = redit::split_lines(r.out);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("human", 0) == 0);
  CHECK(lines[1].rfind("machine", 0) == 0);
  CHECK(lines[2].rfind("human", 0) == 0);
}

TEST_CASE("identity rewriter yields all-one features", "[cli]") {
  const auto r = cli("detect --model-file " + trained_model() + " --rewriter identity --text \"anything at all\"");
  CHECK((r.status == 0 || r.status == 10));
  CHECK(r.out.find("[1,1,1,1,1,1]") != std::string::npos);
}

TEST_CASE("schema mismatch has its own exit code", "[cli]") {
  const auto r = cli("detect --model-file " + trained_model() + " --scheme uncertainty --text \"a b c\"");
  CHECK(r.status == 3);
  CHECK(r.out.find("SchemaMismatch") != std::string::npos);
}

TEST_CASE("rewrite is resumable through the cache", "[cli]") {
  const auto cache = ws().path("cache.jsonl");
  const auto records = ws().path("rewrites.jsonl");
  const auto first = cli("rewrite --corpus " + ws().corpus + " --cache " + cache + " --out " + records);
  REQUIRE(first.status == 0);
  CHECK(first.out.find("new cache entries 360") != std::string::npos);
  CHECK(redit::split_lines(redit::read_file(records)).size() == 360);

  // Simulate an interrupted run by dropping the tail of the cache.
  auto lines = redit::split_lines(redit::read_file(cache));
  std::string kept;
  for (std::size_t i = 0; i < 300; ++i) kept += lines[i] + "\n";
  redit::write_file(cache, kept + lines[300].substr(0, 20));
  const auto second = cli("rewrite --corpus " + ws().corpus + " --cache " + cache + " --out " + records);
  REQUIRE(second.status == 0);
  CHECK(second.out.find("cached 300") != std::string::npos);
  CHECK(second.out.find("new cache entries 60") != std::string::npos);

  const auto inspect = cli("cache inspect --cache " + cache);
  CHECK(inspect.status == 0);
  CHECK(inspect.out.find("entries 360") != std::string::npos);
  CHECK(inspect.out.find("model mock 360") != std::string::npos);
}

TEST_CASE("remote rewriter without configuration fails before any work", "[cli]") {
  const auto out = ws().path("never.jsonl");
  const auto r = cli("rewrite --rewriter remote --corpus " + ws().corpus + " --out " + out);
  CHECK(r.status == 2);
  CHECK(r.out.find("ConfigError") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("eval protocols", "[cli]") {
  SECTION("in-domain") {
    const auto big = ws().path("big.jsonl");
    REQUIRE(cli("synth --out " + big + " --size 200 --seed 42").status == 0);
    const auto r = cli("eval --protocol in_domain --corpus " + big + " --seed 1");
    REQUIRE(r.status == 0);
    std::smatch m;
    REQUIRE(std::regex_search(r.out, m, std::regex(R"(overall\s+\d+\s+\d+\s+\d+\s+\d+\s+\S+\s+\S+\s+(\S+))")));
    CHECK(std::stod(m[1]) >= 0.95);
  }
  SECTION("length") {
    const auto r = cli("eval --protocol length --corpus " + ws().corpus);
    REQUIRE(r.status == 0);
    std::size_t rows = 0;
    for (const auto& line : redit::split_lines(r.out)) rows += line.rfind("length=", 0) == 0;
    CHECK(rows == 6);
  }
  SECTION("ood with overlapping corpora") {
    const auto r = cli("eval --protocol ood --corpus " + ws().corpus + " --test-corpus " + ws().corpus);
    CHECK(r.status == 1);
    CHECK(r.out.find("OverlapDetected") != std::string::npos);
  }
  SECTION("artifacts from different configurations are not mixed") {
    const auto dir = ws().path("eval_out");
    REQUIRE(cli("eval --corpus " + ws().corpus + " --out " + dir).status == 0);
    CHECK(fs::exists(fs::path(dir) / "report.jsonl"));
    CHECK(cli("eval --corpus " + ws().corpus + " --out " + dir).status == 0);
    const auto r = cli("eval --corpus " + ws().corpus + " --ngram 2 --out " + dir);
    CHECK(r.status == 2);
  }
}

TEST_CASE("usage errors", "[cli]") {
  CHECK(cli("").status == 2);
  CHECK(cli("detect").status == 2);
  CHECK(cli("featurize --corpus /nonexistent.jsonl --out /tmp/x.jsonl").status == 1);
}
