#pragma once

// Distances between VDNAs: per-neuron EMD on histograms, univariate Frechet
// distance on Gaussian moments, their weighted combinations, and the
// layer-wise multivariate Frechet distance.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "vdna/dist.hpp"
#include "vdna/error.hpp"
#include "vdna/vdna.hpp"
#include "vdna/weights.hpp"

namespace vdna {

/// Unit of the EMD: adjacent bins one apart, or physical units on [-1, 1]
/// where adjacent bins are 2/B apart.
enum class EmdUnit { kBins, kActivation };

/// Sum over bins of |F1[k] - F2[k]|, F being the normalized cumulative
/// histogram. Cumulative gaps are formed exactly in integers as
/// |C1[k] T2 - C2[k] T1| / (T1 T2).
inline double emd_neuron(std::span<const std::uint64_t> h1, std::span<const std::uint64_t> h2,
                         EmdUnit unit = EmdUnit::kBins) {
  if (h1.size() != h2.size()) {
    throw IncompatibleError("EMD between histograms with " + std::to_string(h1.size()) +
                            " and " + std::to_string(h2.size()) + " bins");
  }
  using u128 = unsigned __int128;
  u128 t1 = 0, t2 = 0;
  for (auto c : h1) t1 += c;
  for (auto c : h2) t2 += c;
  if (t1 == 0 || t2 == 0) throw NumericError("EMD of an empty histogram");

  u128 c1 = 0, c2 = 0, gap_sum = 0;
  for (std::size_t k = 0; k < h1.size(); ++k) {
    c1 += h1[k];
    c2 += h2[k];
    const u128 a = c1 * t2;
    const u128 b = c2 * t1;
    gap_sum += a > b ? a - b : b - a;
  }
  double emd = static_cast<double>(gap_sum) / (static_cast<double>(t1) * static_cast<double>(t2));
  if (unit == EmdUnit::kActivation) emd *= 2.0 / static_cast<double>(h1.size());
  return emd;
}

inline double emd_neuron(const Histogram& h1, const Histogram& h2,
                         EmdUnit unit = EmdUnit::kBins) {
  return emd_neuron(h1.counts(), h2.counts(), unit);
}

/// Univariate Frechet distance sqrt((mu1-mu2)^2 + (sd1-sd2)^2).
inline double fd_neuron(const GaussianMoments& g1, const GaussianMoments& g2) {
  if (g1.count < 2 || g2.count < 2) {
    throw NumericError("Frechet distance needs at least 2 values per side");
  }
  const double dm = g1.mean() - g2.mean();
  const double ds = g1.stddev() - g2.stddev();
  return std::sqrt(dm * dm + ds * ds);
}

/// Per-neuron distances: EMD for histogram VDNAs, FD for Gaussian VDNAs.
inline std::vector<double> neuron_distances(const Vdna& a, const Vdna& b,
                                            EmdUnit unit = EmdUnit::kBins) {
  a.check_comparable(b);
  std::vector<double> out(a.neuron_count());
  if (a.kind() == Kind::kHist) {
    const auto& ha = a.histograms();
    const auto& hb = b.histograms();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = emd_neuron(ha[i], hb[i], unit);
  } else {
    const auto& ga = a.gaussians();
    const auto& gb = b.gaussians();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fd_neuron(ga[i], gb[i]);
  }
  return out;
}

inline double weighted_sum(std::span<const double> distances, const WeightVector& w) {
  if (w.size() != distances.size()) {
    throw ArgumentError("weight vector has " + std::to_string(w.size()) +
                        " entries for " + std::to_string(distances.size()) + " distances");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) total += w[i] * distances[i];
  return total;
}

inline double mean_of(std::span<const double> distances) {
  if (distances.empty()) throw ArgumentError("mean over zero distances");
  return std::accumulate(distances.begin(), distances.end(), 0.0) /
         static_cast<double>(distances.size());
}

/// Weighted per-neuron EMD; uniform weights give the average EMD.
inline double emd_weighted(const Vdna& a, const Vdna& b, const WeightVector& w,
                           EmdUnit unit = EmdUnit::kBins) {
  if (a.kind() != Kind::kHist) throw IncompatibleError("EMD requires histogram VDNAs");
  return weighted_sum(neuron_distances(a, b, unit), w);
}

inline double emd_avg(const Vdna& a, const Vdna& b, EmdUnit unit = EmdUnit::kBins) {
  return emd_weighted(a, b, WeightVector::uniform(a.neuron_count()), unit);
}

inline double fd_weighted(const Vdna& a, const Vdna& b, const WeightVector& w) {
  if (a.kind() != Kind::kGauss) throw IncompatibleError("neuron-wise FD requires Gaussian VDNAs");
  return weighted_sum(neuron_distances(a, b), w);
}

}  // namespace vdna
