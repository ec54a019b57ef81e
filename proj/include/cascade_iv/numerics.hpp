#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace cascade_iv {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(e^a + e^b) without overflow; -inf operands are the additive identity.
inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// Max-shifted log-sum-exp over a span of log-terms.
inline double log_sum_exp(std::span<const double> terms) {
  double hi = kNegInf;
  for (double x : terms) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : terms) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

/// log C(n, k) through log-gamma.
inline double log_binomial(double n, double k) {
  if (k < 0.0 || k > n) return kNegInf;
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  void merge(const CompensatedSum& other) {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Linear value paired with its natural log; the log survives when the
/// linear value underflows.
struct LogValue {
  double value = 0.0;
  double log_value = kNegInf;

  static LogValue from_log(double lv) { return LogValue{std::exp(lv), lv}; }
};

}  // namespace cascade_iv
