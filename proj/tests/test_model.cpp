#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "redit/model.hpp"

using Catch::Approx;
using redit::ErrorCode;
using redit::Label;
using redit::TrainingExample;

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

double accuracy(const redit::DetectorModel& m, const std::vector<TrainingExample>& data) {
  std::size_t ok = 0;
  for (const auto& e : data) {
    const bool machine = redit::machine_probability(m, e.values) >= m.threshold;
    ok += machine == (e.label == Label::kMachine);
  }
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("sigmoid and softplus", "[model]") {
  CHECK(redit::sigmoid(0.0) == 0.5);
  CHECK(redit::sigmoid(800.0) == 1.0);
  CHECK(redit::sigmoid(-800.0) == 0.0);
  CHECK(redit::softplus(0.0) == Approx(std::log(2.0)));
  CHECK(std::isfinite(redit::softplus(1000.0)));
}

TEST_CASE("analytic gradient matches finite differences", "[model][property]") {
  std::mt19937_64 rng(123);
  for (int problem = 0; problem < 50; ++problem) {
    const std::size_t n = 3 + redit::uniform_below(rng, 8), dim = 1 + redit::uniform_below(rng, 4);
    std::vector<std::vector<double>> x(n, std::vector<double>(dim));
    std::vector<double> y(n), w(dim);
    for (auto& row : x) {
      for (auto& v : row) v = redit::standard_normal(rng);
    }
    for (auto& v : y) v = static_cast<double>(redit::uniform_below(rng, 2));
    for (auto& v : w) v = 0.5 * redit::standard_normal(rng);
    const double b = 0.5 * redit::standard_normal(rng), l2 = 0.1 * redit::uniform_unit(rng);

    const auto obj = redit::logistic_objective(x, y, w, b, l2);
    CHECK(obj.loss == Approx(oracle::naive_loss(x, y, w, b, l2)).epsilon(1e-12));
    const auto numeric = oracle::numeric_gradient(x, y, w, b, l2);
    for (std::size_t j = 0; j <= dim; ++j) {
      const double analytic = j < dim ? obj.grad_weights[j] : obj.grad_bias;
      const double rel = std::fabs(analytic - numeric[j]) / std::max(1e-8, std::max(std::fabs(analytic), std::fabs(numeric[j])));
      INFO("problem " << problem << " coordinate " << j);
      CHECK(rel < 1e-5);
    }
  }
}

TEST_CASE("separable fixture", "[model]") {
  const auto data = oracle::separable_fixture();
  std::vector<double> losses;
  const auto m = redit::train(data, {}, "fp", &losses);
  CHECK(accuracy(m, data) >= 0.99);
  CHECK(m.schema_fingerprint == "fp");
  REQUIRE(losses.size() == 501);
  CHECK(losses.front() == Approx(std::log(2.0)));
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);

  const auto again = redit::train(data, {});
  CHECK(again.weights == m.weights);
  CHECK(again.bias == m.bias);
}

TEST_CASE("training guards", "[model]") {
  std::vector<TrainingExample> one_class = {{{1.0}, Label::kHuman}, {{2.0}, Label::kHuman}};
  CHECK(code_of([&] { redit::train(one_class, {}); }) == ErrorCode::kDegenerateLabels);
  std::vector<TrainingExample> ragged = {{{1.0}, Label::kHuman}, {{2.0, 3.0}, Label::kMachine}};
  CHECK(code_of([&] { redit::train(ragged, {}); }) == ErrorCode::kSchemaMismatch);
  auto data = oracle::separable_fixture(20);
  data[0].values[0] = 1e300;
  data[1].values[0] = -1e300;
  redit::TrainConfig wild;
  wild.learning_rate = 1e300;
  CHECK(code_of([&] { redit::train(data, wild); }) == ErrorCode::kNonFiniteLoss);
}

TEST_CASE("zero weights predict 0.5, which is machine", "[model]") {
  redit::DetectorModel m;
  m.weights = {0.0, 0.0};
  m.training_meta.feature_means = {0.0, 0.0};
  m.training_meta.feature_stds = {1.0, 1.0};
  m.schema_fingerprint = "s";
  const auto p = redit::predict(m, {{0.3, 0.9}, "s", redit::Scheme::kInvariance});
  CHECK(p.probability_machine == 0.5);
  CHECK(p.label == Label::kMachine);
}

TEST_CASE("decisions are invariant to positive scaling of the parameters", "[model][property]") {
  const auto data = oracle::separable_fixture();
  const auto m = redit::train(data, {});
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto scaled = m;
    const double c = 0.01 + 100.0 * redit::uniform_unit(rng);
    for (auto& w : scaled.weights) w *= c;
    scaled.bias *= c;
    for (const auto& e : data) {
      const double p = redit::machine_probability(m, e.values);
      if (p == 0.5) continue;
      REQUIRE((p > 0.5) == (redit::machine_probability(scaled, e.values) > 0.5));
    }
  }
}

TEST_CASE("held-out point from the machine cluster", "[model]") {
  const auto m = redit::train(oracle::separable_fixture(), {});
  const auto held_out = oracle::separable_fixture(200, 99);
  CHECK(redit::machine_probability(m, held_out.back().values) >= 0.5);
  CHECK(redit::machine_probability(m, held_out.front().values) < 0.5);
}

TEST_CASE("standardization makes training scale-invariant", "[model][property]") {
  const auto data = oracle::separable_fixture(100, 3);
  auto scaled = data;
  for (auto& e : scaled) {
    e.values[0] = 1000.0 * e.values[0] + 7.0;
    e.values[1] = 0.001 * e.values[1] - 2.0;
  }
  const auto a = redit::train(data, {});
  const auto b = redit::train(scaled, {});
  for (std::size_t j = 0; j < 2; ++j) CHECK(a.weights[j] == Approx(b.weights[j]).epsilon(1e-6));
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(redit::machine_probability(a, data[i].values) ==
          Approx(redit::machine_probability(b, scaled[i].values)).epsilon(1e-6));
  }
}

TEST_CASE("constant features get zero weight", "[model]") {
  auto data = oracle::separable_fixture(40);
  for (auto& e : data) e.values.push_back(0.25);
  const auto m = redit::train(data, {});
  CHECK(m.weights[2] == 0.0);
  CHECK(m.training_meta.feature_stds[2] == 1.0);
}

TEST_CASE("model file round trip", "[model]") {
  const auto m = redit::train(oracle::separable_fixture(), {}, "abc123");
  const auto text = redit::serialize_model(m);
  const auto back = redit::parse_model(text);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.schema_fingerprint == "abc123");
  CHECK(back.training_meta.feature_means == m.training_meta.feature_means);
  CHECK(back.training_meta.feature_stds == m.training_meta.feature_stds);
  CHECK(redit::serialize_model(back) == text);
  for (const auto& e : oracle::separable_fixture(50, 31)) {
    CHECK(redit::machine_probability(back, e.values) == redit::machine_probability(m, e.values));
  }

  SECTION("truncated") {
    const auto cut = text.substr(0, text.size() / 2);
    CHECK(code_of([&] { redit::parse_model(cut); }) == ErrorCode::kParseError);
    CHECK(code_of([&] { redit::parse_model(text.substr(0, text.size() - 4)); }) == ErrorCode::kParseError);
  }
  SECTION("wrong version") {
    auto v2 = text;
    v2.replace(v2.find(" 1\n"), 3, " 2\n");
    CHECK(code_of([&] { redit::parse_model(v2); }) == ErrorCode::kVersionMismatch);
  }
  SECTION("schema mismatch on predict") {
    CHECK(code_of([&] { redit::predict(back, {{0.0, 0.0}, "other", redit::Scheme::kInvariance}); }) ==
          ErrorCode::kSchemaMismatch);
    CHECK(code_of([&] { redit::predict(back, {{0.0}, "abc123", redit::Scheme::kInvariance}); }) ==
          ErrorCode::kSchemaMismatch);
  }
}

TEST_CASE("training from feature records", "[model]") {
  std::vector<redit::FeatureRecord> recs;
  for (const auto& e : oracle::separable_fixture(40)) {
    recs.push_back({"d" + std::to_string(recs.size()), e.label, {e.values, "fp", redit::Scheme::kInvariance}});
  }
  CHECK(redit::train(recs, {}).schema_fingerprint == "fp");
  recs.back().features.schema_fingerprint = "other";
  CHECK(code_of([&] { redit::train(recs, {}); }) == ErrorCode::kSchemaMismatch);
}
