#pragma once

// Layer-wise multivariate Frechet distance between Gaussian fits of
// spatially averaged per-image features (the usual FID construction).
// Covariances cannot be recovered from a Vdna, so these statistics come from
// their own streaming pass over activation dumps.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdna/actio.hpp"
#include "vdna/detail/binio.hpp"
#include "vdna/error.hpp"
#include "vdna/layers.hpp"
#include "vdna/weights.hpp"

namespace vdna {

inline constexpr std::string_view kLayerStatsMagic = "VDNALFD1";
inline constexpr std::uint32_t kLayerStatsVersion = 1;

struct LayerGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::uint64_t count = 0;

  Eigen::Index dim() const { return mean.size(); }

  /// Fewer samples than dim + 1 leaves the covariance rank-deficient.
  bool underdetermined() const { return count < static_cast<std::uint64_t>(dim()) + 1; }
};

namespace detail {

// Square root of a symmetric PSD matrix; eigenvalues below zero are treated as 0.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the trace of the
/// square root taken as sum sqrt(eig(S1^(1/2) S2 S1^(1/2))).
inline double fd_layer(const LayerGaussian& a, const LayerGaussian& b) {
  if (a.dim() != b.dim() || a.cov.rows() != a.dim() || b.cov.rows() != b.dim() ||
      a.cov.cols() != a.dim() || b.cov.cols() != b.dim()) {
    throw IncompatibleError("layer statistics differ in dimension");
  }
  if (!a.mean.allFinite() || !b.mean.allFinite() || !a.cov.allFinite() || !b.cov.allFinite()) {
    throw NumericError("non-finite layer statistics");
  }
  const Eigen::MatrixXd s1h = detail::psd_sqrt(a.cov);
  Eigen::MatrixXd inner = s1h * b.cov * s1h;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    tr_sqrt += std::sqrt(std::max(es.eigenvalues()[i], 0.0));
  }
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

/// Welford-style running mean and scatter of pooled feature vectors.
class LayerGaussianAccumulator {
 public:
  explicit LayerGaussianAccumulator(Eigen::Index dim)
      : mean_(Eigen::VectorXd::Zero(dim)), scatter_(Eigen::MatrixXd::Zero(dim, dim)) {}

  void add(const Eigen::VectorXd& x) {
    ++count_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    scatter_.noalias() += delta * (x - mean_).transpose();
  }

  void merge(const LayerGaussianAccumulator& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(o.count_);
    const Eigen::VectorXd delta = o.mean_ - mean_;
    mean_ += delta * (nb / (na + nb));
    scatter_ += o.scatter_ + delta * delta.transpose() * (na * nb / (na + nb));
    count_ += o.count_;
  }

  /// Unbiased (n - 1) covariance.
  LayerGaussian finish() const {
    LayerGaussian g;
    g.mean = mean_;
    g.count = count_;
    g.cov = count_ > 1 ? Eigen::MatrixXd(scatter_ / static_cast<double>(count_ - 1))
                       : Eigen::MatrixXd::Zero(mean_.size(), mean_.size());
    g.cov = 0.5 * (g.cov + g.cov.transpose());
    return g;
  }

  std::uint64_t count() const { return count_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;
  std::uint64_t count_ = 0;
};

struct LayerStats {
  std::string extractor_id;
  LayerTable layers;
  std::vector<LayerGaussian> gaussians;

  void save(const std::string& path) const {
    std::vector<std::uint64_t> counts;
    for (const auto& g : gaussians) counts.push_back(g.count);
    nlohmann::json meta = {{"extractor_id", extractor_id},
                           {"layers", layers_to_json(layers)},
                           {"counts", counts}};
    auto out = detail::open_out(path);
    detail::write_envelope(out, kLayerStatsMagic, kLayerStatsVersion, meta);
    for (const auto& g : gaussians) {
      for (Eigen::Index i = 0; i < g.dim(); ++i) detail::write_le<double>(out, g.mean[i]);
      for (Eigen::Index r = 0; r < g.dim(); ++r) {
        for (Eigen::Index c = 0; c < g.dim(); ++c) detail::write_le<double>(out, g.cov(r, c));
      }
    }
    detail::finish_write(out, path);
  }

  static LayerStats load(const std::string& path) {
    auto in = detail::open_in(path);
    try {
      const auto env = detail::read_envelope(in, kLayerStatsMagic, kLayerStatsVersion);
      LayerStats s;
      s.extractor_id = detail::json_get<std::string>(env.meta, "extractor_id");
      s.layers = layers_from_json(env.meta.at("layers"));
      const auto counts = detail::json_get<std::vector<std::uint64_t>>(env.meta, "counts");
      if (counts.size() != s.layers.size()) throw FormatError("counts has the wrong length");
      for (std::size_t l = 0; l < s.layers.size(); ++l) {
        const Eigen::Index n = s.layers[l].neurons;
        LayerGaussian g;
        g.count = counts[l];
        g.mean.resize(n);
        g.cov.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) g.mean[i] = detail::read_le<double>(in, "mean");
        for (Eigen::Index r = 0; r < n; ++r) {
          for (Eigen::Index c = 0; c < n; ++c) g.cov(r, c) = detail::read_le<double>(in, "covariance");
        }
        s.gaussians.push_back(std::move(g));
      }
      return s;
    } catch (const FormatError& e) {
      throw FormatError("'" + path + "': " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("'" + path + "': " + e.what());
    }
  }
};

/// Streams dumps, averaging each neuron over spatial positions per image.
class LayerStatsBuilder {
 public:
  explicit LayerStatsBuilder(DumpHeader header) : header_(std::move(header)) {
    for (const auto& l : header_.layers) acc_.emplace_back(static_cast<Eigen::Index>(l.neurons));
  }

  void add(const ImageRecord& rec) {
    for (std::size_t l = 0; l < header_.layers.size(); ++l) {
      const auto& act = rec.layers.at(l);
      Eigen::VectorXd pooled(header_.layers[l].neurons);
      for (Eigen::Index n = 0; n < pooled.size(); ++n) {
        double s = 0.0;
        for (float v : act.neuron(static_cast<std::size_t>(n))) s += v;
        pooled[n] = s / act.spatial_size;
      }
      acc_[l].add(pooled);
    }
  }

  void add(DumpReader& reader) {
    if (reader.header() != header_) {
      throw IncompatibleError("dump '" + reader.path() + "' has a different extractor or layer table");
    }
    ImageRecord rec;
    while (reader.next(rec)) add(rec);
  }

  LayerStats finish() const {
    LayerStats s{header_.extractor_id, header_.layers, {}};
    for (const auto& a : acc_) s.gaussians.push_back(a.finish());
    return s;
  }

 private:
  DumpHeader header_;
  std::vector<LayerGaussianAccumulator> acc_;
};

struct LayerFdResult {
  std::vector<double> per_layer;
  double combined = 0.0;
};

/// Per-layer FD and their weighted combination (uniform average by default).
inline LayerFdResult fd_layers(const LayerStats& a, const LayerStats& b,
                               const WeightVector* weights = nullptr) {
  if (a.extractor_id != b.extractor_id || a.layers != b.layers) {
    throw IncompatibleError("layer statistics come from different extractors or layers");
  }
  LayerFdResult r;
  for (std::size_t l = 0; l < a.gaussians.size(); ++l) {
    r.per_layer.push_back(fd_layer(a.gaussians[l], b.gaussians[l]));
  }
  const WeightVector w = weights ? *weights : WeightVector::uniform(r.per_layer.size());
  if (w.size() != r.per_layer.size()) {
    throw ArgumentError("layer weights have " + std::to_string(w.size()) + " entries for " +
                        std::to_string(r.per_layer.size()) + " layers");
  }
  for (std::size_t l = 0; l < r.per_layer.size(); ++l) r.combined += w[l] * r.per_layer[l];
  return r;
}

}  // namespace vdna
