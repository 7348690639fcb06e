#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hemalimit {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      carry_ += (sum_ - t) + v;
    else
      carry_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Per-entry mean/variance accumulator (Welford). Merging is done in a fixed
/// order by the caller, so results do not depend on the worker count.
class MomentTable {
 public:
  MomentTable() = default;
  explicit MomentTable(std::size_t width) : mean_(width, 0.0), m2_(width, 0.0) {}

  void add(std::span<const double> sample);

  std::size_t width() const { return mean_.size(); }
  std::int64_t count() const { return count_; }
  double mean(std::size_t i) const { return mean_[i]; }
  /// Unbiased sample variance (0 for a single sample).
  double variance(std::size_t i) const { return count_ > 1 ? m2_[i] / static_cast<double>(count_ - 1) : 0.0; }
  double standard_error(std::size_t i) const {
    return count_ > 0 ? std::sqrt(variance(i) / static_cast<double>(count_)) : 0.0;
  }
  const std::vector<double>& means() const { return mean_; }

 private:
  std::int64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// SplitMix64 finaliser; used to derive independent per-replicate seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

/// Ordinary least-squares slope of y against x.
double ols_slope(std::span<const double> x, std::span<const double> y);

/// Linearly spaced grid of `count` points on [lo, hi] (count >= 2), endpoints exact.
std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace hemalimit
