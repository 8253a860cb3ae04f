#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vdna/error.hpp"

namespace vdna {

inline constexpr std::uint32_t kDefaultBins = 1000;

/// Bin of a normalized activation on the uniform partition of [-1, 1].
/// Bins are half-open [b_k, b_k+1) except the last, which also holds +1.
/// Out-of-range inputs land in the edge bins.
inline std::uint32_t bin_index(double v, std::uint32_t bins) {
  const double pos = std::floor((v + 1.0) * 0.5 * bins);
  if (!(pos > 0.0)) return 0;  // also catches NaN
  if (pos >= bins - 1.0) return bins - 1;
  return static_cast<std::uint32_t>(pos);
}

class Histogram {
 public:
  Histogram() = default;
  explicit Histogram(std::uint32_t bins) : counts_(bins, 0) {
    if (bins == 0) throw ArgumentError("histogram needs at least one bin");
  }
  explicit Histogram(std::vector<std::uint64_t> counts) : counts_(std::move(counts)) {
    if (counts_.empty()) throw ArgumentError("histogram needs at least one bin");
  }

  std::uint32_t bins() const { return static_cast<std::uint32_t>(counts_.size()); }
  std::span<const std::uint64_t> counts() const { return counts_; }
  std::uint64_t operator[](std::size_t k) const { return counts_[k]; }

  std::uint64_t total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
  }

  void add(double v) { ++counts_[bin_index(v, bins())]; }

  template <typename T>
  void accumulate(std::span<const T> values) {
    const auto b = bins();
    for (T v : values) ++counts_[bin_index(static_cast<double>(v), b)];
  }

  Histogram& merge(const Histogram& other) {
    if (other.bins() != bins()) {
      throw IncompatibleError("cannot merge histograms with " +
                              std::to_string(bins()) + " and " +
                              std::to_string(other.bins()) + " bins");
    }
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    return *this;
  }

  std::vector<std::uint64_t>& mutable_counts() { return counts_; }

  friend bool operator==(const Histogram&, const Histogram&) = default;

 private:
  std::vector<std::uint64_t> counts_;
};

inline Histogram merged(Histogram a, const Histogram& b) {
  a.merge(b);
  return a;
}

/// Streaming first and second moments of a neuron's (normalized) activations.
/// Stored as raw sums so that merging partial results is exact.
struct GaussianMoments {
  std::uint64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double v) {
    ++count;
    sum += v;
    sum_sq += v * v;
  }

  template <typename T>
  void accumulate(std::span<const T> values) {
    double s = 0.0, sq = 0.0;
    for (T raw : values) {
      const double v = static_cast<double>(raw);
      s += v;
      sq += v * v;
    }
    count += values.size();
    sum += s;
    sum_sq += sq;
  }

  GaussianMoments& merge(const GaussianMoments& other) {
    count += other.count;
    sum += other.sum;
    sum_sq += other.sum_sq;
    return *this;
  }

  double mean() const {
    if (count < 1) throw NumericError("mean of an empty accumulator");
    return sum / static_cast<double>(count);
  }

  /// Population variance, clamped at zero against rounding.
  double variance() const {
    if (count < 2) throw NumericError("variance needs at least 2 values");
    const double n = static_cast<double>(count);
    const double m = sum / n;
    return std::max(sum_sq / n - m * m, 0.0);
  }

  double stddev() const { return std::sqrt(variance()); }

  friend bool operator==(const GaussianMoments&, const GaussianMoments&) = default;
};

inline GaussianMoments merged(GaussianMoments a, const GaussianMoments& b) {
  a.merge(b);
  return a;
}

}  // namespace vdna
