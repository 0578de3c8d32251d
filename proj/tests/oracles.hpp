#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "redit/model.hpp"
#include "redit/random.hpp"

namespace oracle {

/// Exponential-time edit distance straight from the recursive definition.
inline std::size_t recursive_edit_distance(const std::u32string& a, const std::u32string& b, std::size_t i = 0,
                                           std::size_t j = 0) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  if (a[i] == b[j]) return recursive_edit_distance(a, b, i + 1, j + 1);
  return 1 + std::min({recursive_edit_distance(a, b, i + 1, j),       // delete
                       recursive_edit_distance(a, b, i, j + 1),       // insert
                       recursive_edit_distance(a, b, i + 1, j + 1)});  // substitute
}

/// Memoised version of the same recursion for the longer property sweeps.
inline std::size_t memo_edit_distance(const std::u32string& a, const std::u32string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t r = a[i] == b[j] ? go(i + 1, j + 1) : 1 + std::min({go(i + 1, j), go(i, j + 1), go(i + 1, j + 1)});
    memo[key] = r;
    return r;
  };
  return go(0, 0);
}

/// Multiset intersection size by repeatedly crossing off matches.
inline std::size_t brute_force_common(std::vector<std::string> a, const std::vector<std::string>& b) {
  std::size_t common = 0;
  for (const auto& x : b) {
    auto it = std::find(a.begin(), a.end(), x);
    if (it != a.end()) {
      a.erase(it);
      ++common;
    }
  }
  return common;
}

inline std::u32string random_string(std::mt19937_64& rng, std::size_t max_len, char32_t alphabet = 4) {
  const auto len = redit::uniform_below(rng, max_len + 1);
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(U'a' + static_cast<char32_t>(redit::uniform_below(rng, alphabet)));
  return s;
}

/// Two unit-variance Gaussian clusters in 2-D whose centres are 4 sigma apart
/// along the diagonal. Draws landing on the wrong side of the perpendicular
/// bisector are redrawn, so the set is linearly separable. First half human,
/// second half machine.
inline std::vector<redit::TrainingExample> separable_fixture(std::size_t n = 200, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  const double offset = 2.0 / std::sqrt(2.0);  // |mu_m - mu_h| = 4
  std::vector<redit::TrainingExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool machine = i >= n / 2;
    const double c = machine ? offset : -offset;
    double x = 0, y = 0;
    do {
      x = c + redit::standard_normal(rng);
      y = c + redit::standard_normal(rng);
    } while ((x + y > 0) != machine);
    out.push_back({{x, y}, machine ? redit::Label::kMachine : redit::Label::kHuman});
  }
  return out;
}

/// Regularized mean cross-entropy written out naively.
inline double naive_loss(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                         const std::vector<double>& w, double b, double l2) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
    const double p = 1.0 / (1.0 + std::exp(-z));
    total -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return total / static_cast<double>(x.size()) + 0.5 * l2 * sq;
}

/// Central finite-difference gradient of naive_loss.
inline std::vector<double> numeric_gradient(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                            std::vector<double> w, double b, double l2, double h = 1e-6) {
  std::vector<double> g(w.size() + 1);
  for (std::size_t j = 0; j <= w.size(); ++j) {
    auto eval = [&](double delta) {
      auto w2 = w;
      double b2 = b;
      if (j < w.size()) w2[j] += delta; else b2 += delta;
      return naive_loss(x, y, w2, b2, l2);
    };
    g[j] = (eval(h) - eval(-h)) / (2 * h);
  }
  return g;
}

}  // namespace oracle
