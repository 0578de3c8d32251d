#pragma once

// Welch's unequal-variance two-sample t test with a one-sided p-value.

#include <cmath>
#include <limits>
#include <span>
#include <string_view>

#include "redit/error.hpp"

namespace redit {

namespace detail {

/// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b). `xc` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
inline double incomplete_beta(double a, double b, double x, double xc) {
  if (x <= 0.0) return 0.0;
  if (xc <= 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(xc);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, xc) / b;
}

/// P(T > t) for Student's t with `df` degrees of freedom (df may be fractional).
inline double student_t_sf(double t, double df) {
  if (std::isnan(t) || !(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double t2 = t * t;
  // Tail mass beyond |t| on one side.
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2));
  return t >= 0.0 ? tail : 1.0 - tail;
}

/// Which group the alternative hypothesis says has the larger mean.
enum class TestDirection { kFirstGreater, kSecondGreater };

inline std::string_view to_string(TestDirection d) {
  return d == TestDirection::kFirstGreater ? "first_greater" : "second_greater";
}

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  TestDirection direction = TestDirection::kFirstGreater;
  std::string_view variant = "welch";
};

/// t = (mean_a - mean_b) / sqrt(var_a/n_a + var_b/n_b) with Welch-Satterthwaite
/// degrees of freedom; the p-value is one-sided in `direction`.
inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b, TestDirection direction) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::kInsufficientData, "each group needs at least 2 values");
  auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [mean_a, var_a] = moments(a);
  const auto [mean_b, var_b] = moments(b);
  if (var_a == 0.0 && var_b == 0.0) throw Error(ErrorCode::kZeroVariance, "both groups are constant");

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = var_a / na;
  const double sb = var_b / nb;
  TTestResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.direction = direction;
  r.t_statistic = (mean_a - mean_b) / std::sqrt(sa + sb);
  r.degrees_of_freedom = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = direction == TestDirection::kFirstGreater ? student_t_sf(r.t_statistic, r.degrees_of_freedom)
                                                        : student_t_sf(-r.t_statistic, r.degrees_of_freedom);
  return r;
}

}  // namespace redit
