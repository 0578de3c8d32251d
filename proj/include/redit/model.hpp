#pragma once

// L2-regularized logistic regression over z-scored feature vectors, trained
// by full-batch gradient descent.

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "redit/corpus.hpp"
#include "redit/error.hpp"
#include "redit/features.hpp"
#include "redit/textio.hpp"

namespace redit {

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 500;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct TrainingMeta {
  int epochs = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
};

struct DetectorModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::string schema_fingerprint;
  double threshold = 0.5;
  TrainingMeta training_meta;

  std::size_t dimension() const noexcept { return weights.size(); }
};

struct Prediction {
  double probability_machine = 0.5;
  Label label = Label::kMachine;
  FeatureVector features;
};

/// Numerically stable logistic function; sigmoid(0) is exactly 0.5.
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Objective {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

/// Mean logistic loss plus (l2/2)|w|^2, and its gradient. Rows of `x` are
/// examples; `y` holds 0 (human) or 1 (machine).
inline Objective logistic_objective(std::span<const std::vector<double>> x, std::span<const double> y,
                                    std::span<const double> w, double b, double l2) {
  Objective obj;
  obj.grad_weights.assign(w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    obj.loss += softplus(z) - y[i] * z;
    const double residual = sigmoid(z) - y[i];
    for (std::size_t j = 0; j < w.size(); ++j) obj.grad_weights[j] += residual * x[i][j];
    obj.grad_bias += residual;
  }
  obj.loss *= inv_n;
  obj.grad_bias *= inv_n;
  double sq = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    obj.grad_weights[j] = obj.grad_weights[j] * inv_n + l2 * w[j];
    sq += w[j] * w[j];
  }
  obj.loss += 0.5 * l2 * sq;
  return obj;
}

struct TrainingExample {
  std::vector<double> values;
  Label label = Label::kHuman;
};

namespace detail {

inline void check_examples(std::span<const TrainingExample> examples) {
  if (examples.size() < 2) throw Error(ErrorCode::kDegenerateLabels, "need at least 2 training examples");
  const std::size_t dim = examples.front().values.size();
  bool human = false, machine = false;
  for (const auto& e : examples) {
    if (e.values.size() != dim) throw Error(ErrorCode::kSchemaMismatch, "training vectors differ in length");
    (e.label == Label::kMachine ? machine : human) = true;
  }
  if (!human || !machine) throw Error(ErrorCode::kDegenerateLabels, "training data contains a single class");
}

}  // namespace detail

/// Fits the model on raw vectors. `schema_fingerprint` is stamped into the
/// result; `loss_history`, when given, receives the loss before each epoch
/// and after the last one.
inline DetectorModel train(std::span<const TrainingExample> examples, const TrainConfig& config,
                           std::string schema_fingerprint = {}, std::vector<double>* loss_history = nullptr) {
  detail::check_examples(examples);
  if (!(config.learning_rate > 0.0) || config.epochs < 0 || config.l2 < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid training configuration");
  }
  const std::size_t n = examples.size();
  const std::size_t dim = examples.front().values.size();

  DetectorModel model;
  model.schema_fingerprint = std::move(schema_fingerprint);
  auto& meta = model.training_meta;
  meta.epochs = config.epochs;
  meta.learning_rate = config.learning_rate;
  meta.l2 = config.l2;
  meta.seed = config.seed;
  meta.feature_means.assign(dim, 0.0);
  meta.feature_stds.assign(dim, 1.0);

  std::vector<bool> constant(dim, false);
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (const auto& e : examples) mean += e.values[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& e : examples) var += (e.values[j] - mean) * (e.values[j] - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    meta.feature_means[j] = mean;
    if (sd > 1e-12 && std::isfinite(sd)) {
      meta.feature_stds[j] = sd;
    } else {
      constant[j] = true;
    }
  }

  std::vector<std::vector<double>> x(n, std::vector<double>(dim));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      x[i][j] = constant[j] ? 0.0 : (examples[i].values[j] - meta.feature_means[j]) / meta.feature_stds[j];
    }
    y[i] = examples[i].label == Label::kMachine ? 1.0 : 0.0;
  }

  // The objective is convex, so a zero start is as good as any; the seed is
  // recorded for provenance.
  model.weights.assign(dim, 0.0);
  model.bias = 0.0;
  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    const Objective obj = logistic_objective(x, y, model.weights, model.bias, config.l2);
    if (!std::isfinite(obj.loss)) {
      throw Error(ErrorCode::kNonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch) +
                                                 "; reduce the learning rate");
    }
    if (loss_history) loss_history->push_back(obj.loss);
    if (epoch == config.epochs) break;
    for (std::size_t j = 0; j < dim; ++j) {
      if (!constant[j]) model.weights[j] -= config.learning_rate * obj.grad_weights[j];
    }
    model.bias -= config.learning_rate * obj.grad_bias;
  }
  for (std::size_t j = 0; j < dim; ++j) {
    if (!std::isfinite(model.weights[j])) throw Error(ErrorCode::kNonFiniteLoss, "non-finite weight");
  }
  return model;
}

/// Fits on feature-file records; all must share one schema fingerprint.
inline DetectorModel train(std::span<const FeatureRecord> records, const TrainConfig& config,
                           std::vector<double>* loss_history = nullptr) {
  if (records.empty()) throw Error(ErrorCode::kDegenerateLabels, "no training records");
  const std::string& fp = records.front().features.schema_fingerprint;
  std::vector<TrainingExample> examples;
  examples.reserve(records.size());
  for (const auto& r : records) {
    if (r.features.schema_fingerprint != fp) {
      throw Error(ErrorCode::kSchemaMismatch, "record '" + r.document_id + "' has a different schema fingerprint");
    }
    examples.push_back({r.features.values, r.label});
  }
  return train(examples, config, fp, loss_history);
}

/// Probability of the raw vector being machine text, ignoring fingerprints.
inline double machine_probability(const DetectorModel& model, std::span<const double> values) {
  if (values.size() != model.dimension()) {
    throw Error(ErrorCode::kSchemaMismatch, "feature length " + std::to_string(values.size()) + " != model dimension " +
                                                std::to_string(model.dimension()));
  }
  const auto& meta = model.training_meta;
  double z = model.bias;
  for (std::size_t j = 0; j < values.size(); ++j) {
    z += model.weights[j] * ((values[j] - meta.feature_means[j]) / meta.feature_stds[j]);
  }
  return sigmoid(z);
}

inline Prediction predict(const DetectorModel& model, const FeatureVector& features) {
  if (features.schema_fingerprint != model.schema_fingerprint) {
    throw Error(ErrorCode::kSchemaMismatch, "feature schema " + features.schema_fingerprint.substr(0, 12) +
                                                " does not match model schema " + model.schema_fingerprint.substr(0, 12));
  }
  Prediction p;
  p.probability_machine = machine_probability(model, features.values);
  p.label = p.probability_machine >= model.threshold ? Label::kMachine : Label::kHuman;
  p.features = features;
  return p;
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr std::string_view kModelMagic = "redit-detector-model";
inline constexpr int kModelVersion = 1;

inline std::string serialize_model(const DetectorModel& m) {
  const auto& meta = m.training_meta;
  std::string out;
  out += std::string(kModelMagic) + " " + std::to_string(kModelVersion) + "\n";
  out += "fingerprint " + m.schema_fingerprint + "\n";
  out += "dims " + std::to_string(m.dimension()) + "\n";
  out += "threshold " + format_real(m.threshold) + "\n";
  out += "bias " + format_real(m.bias) + "\n";
  out += "epochs " + std::to_string(meta.epochs) + "\n";
  out += "learning_rate " + format_real(meta.learning_rate) + "\n";
  out += "l2 " + format_real(meta.l2) + "\n";
  out += "seed " + std::to_string(meta.seed) + "\n";
  out += "means";
  for (double v : meta.feature_means) out += " " + format_real(v);
  out += "\nstds";
  for (double v : meta.feature_stds) out += " " + format_real(v);
  out += "\nweights\n";
  for (double w : m.weights) out += format_real(w) + "\n";
  out += "end\n";
  return out;
}

inline DetectorModel parse_model(std::string_view content, const std::string& source = "<memory>") {
  const auto lines = split_lines(content);
  std::size_t at = 0;
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::kParseError, source + ":" + std::to_string(at + 1) + ": " + what);
  };
  auto next = [&](std::string_view key) -> std::vector<std::string> {
    if (at >= lines.size()) throw fail("unexpected end of file, expected '" + std::string(key) + "'");
    std::istringstream ss(lines[at]);
    std::vector<std::string> parts;
    for (std::string p; ss >> p;) parts.push_back(p);
    if (parts.empty() || parts.front() != key) throw fail("expected '" + std::string(key) + "'");
    parts.erase(parts.begin());
    ++at;
    return parts;
  };
  auto real = [&](const std::string& s) {
    double v = 0;
    if (!parse_real(s, v)) throw fail("bad real '" + s + "'");
    return v;
  };
  auto integer = [&](const std::string& s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw fail("bad integer '" + s + "'");
    return v;
  };
  auto single = [&](std::string_view key) {
    auto parts = next(key);
    if (parts.size() != 1) throw fail("'" + std::string(key) + "' takes one value");
    return parts.front();
  };

  const std::string version = single(kModelMagic);
  if (version != std::to_string(kModelVersion)) {
    throw Error(ErrorCode::kVersionMismatch, source + ": model version " + version + ", expected " +
                                                 std::to_string(kModelVersion));
  }
  DetectorModel m;
  m.schema_fingerprint = single("fingerprint");
  const auto dims = integer(single("dims"));
  m.threshold = real(single("threshold"));
  if (!(m.threshold > 0.0 && m.threshold < 1.0)) throw fail("threshold must lie in (0,1)");
  m.bias = real(single("bias"));
  m.training_meta.epochs = static_cast<int>(integer(single("epochs")));
  m.training_meta.learning_rate = real(single("learning_rate"));
  m.training_meta.l2 = real(single("l2"));
  m.training_meta.seed = integer(single("seed"));
  for (const auto& s : next("means")) m.training_meta.feature_means.push_back(real(s));
  for (const auto& s : next("stds")) m.training_meta.feature_stds.push_back(real(s));
  if (m.training_meta.feature_means.size() != dims || m.training_meta.feature_stds.size() != dims) {
    throw fail("standardization statistics do not match dims");
  }
  for (double sd : m.training_meta.feature_stds) {
    if (!(sd > 0.0)) throw fail("non-positive feature std");
  }
  if (!next("weights").empty()) throw fail("'weights' takes no value");
  for (std::uint64_t k = 0; k < dims; ++k) {
    if (at >= lines.size()) throw fail("truncated weights");
    m.weights.push_back(real(lines[at]));
    ++at;
  }
  if (!next("end").empty()) throw fail("'end' takes no value");
  return m;
}

inline void save_model(const DetectorModel& model, const std::string& path) { write_file(path, serialize_model(model)); }

inline DetectorModel load_model(const std::string& path) { return parse_model(read_file(path), path); }

}  // namespace redit
