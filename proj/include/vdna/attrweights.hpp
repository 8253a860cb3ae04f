#pragma once

// Learning per-neuron weights that make the weighted distance ignore one
// attribute while keeping its sensitivity to the others.
//
// For a pair of VDNAs (with / without an attribute) the per-neuron distances
// are constants, so the weighted distance is linear in the weights and the
// loss below is piecewise linear. Gradients are exact away from the kinks of
// |.|, where the subgradient 0 is used.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vdna/error.hpp"
#include "vdna/layers.hpp"
#include "vdna/metrics.hpp"
#include "vdna/weights.hpp"

namespace vdna {

/// Per-neuron distances between the VDNA of images with an attribute and
/// the VDNA of images without it, plus their unweighted mean.
struct AttributePair {
  std::string name;
  std::vector<double> distances;
  double baseline = 0.0;

  static AttributePair from_distances(std::string name, std::vector<double> distances) {
    AttributePair p{std::move(name), std::move(distances), 0.0};
    p.baseline = mean_of(p.distances);
    if (!(p.baseline > 0.0) || !std::isfinite(p.baseline)) {
      throw NumericError("attribute pair '" + p.name +
                         "' has zero baseline distance; sensitivity deviation is undefined");
    }
    return p;
  }

  static AttributePair from_vdnas(std::string name, const Vdna& with, const Vdna& without) {
    return from_distances(std::move(name), neuron_distances(with, without));
  }

  std::size_t size() const { return distances.size(); }
};

inline double weighted_distance(const AttributePair& p, std::span<const double> w) {
  if (w.size() != p.size()) {
    throw ArgumentError("weights have " + std::to_string(w.size()) + " entries, pair '" +
                        p.name + "' has " + std::to_string(p.size()) + " neurons");
  }
  return std::inner_product(w.begin(), w.end(), p.distances.begin(), 0.0);
}

/// 1 - weighted / average distance. 0 at uniform weights, 1 when the
/// weighted distance vanishes.
inline double sensitivity_deviation(const AttributePair& p, std::span<const double> w) {
  if (!(p.baseline > 0.0)) throw NumericError("pair '" + p.name + "' has zero baseline");
  return 1.0 - weighted_distance(p, w) / p.baseline;
}

inline double sensitivity_deviation(const AttributePair& p, const WeightVector& w) {
  return sensitivity_deviation(p, std::span<const double>(w.values()));
}

struct AttributeProblem {
  AttributePair target;
  std::vector<AttributePair> others;

  void validate() const {
    if (others.empty()) throw ArgumentError("the loss needs at least one other attribute");
    for (const auto& o : others) {
      if (o.size() != target.size()) {
        throw ArgumentError("pair '" + o.name + "' has a different neuron count than '" +
                            target.name + "'");
      }
    }
  }
};

/// |1 - delta_target| + mean over others of |delta_other|.
inline double attribute_loss(const AttributeProblem& prob, std::span<const double> w) {
  prob.validate();
  double others = 0.0;
  for (const auto& o : prob.others) others += std::abs(sensitivity_deviation(o, w));
  return std::abs(1.0 - sensitivity_deviation(prob.target, w)) +
         others / static_cast<double>(prob.others.size());
}

namespace detail {
inline double sign_or_zero(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

/// d(loss)/dw. d(delta_p)/dw_n = -d_p[n] / baseline_p.
inline std::vector<double> attribute_loss_gradient(const AttributeProblem& prob,
                                                   std::span<const double> w) {
  prob.validate();
  std::vector<double> g(w.size(), 0.0);
  const auto& t = prob.target;
  // |1 - delta| with delta = 1 - D/b  =>  |D / b|.
  const double st = detail::sign_or_zero(1.0 - sensitivity_deviation(t, w));
  for (std::size_t n = 0; n < g.size(); ++n) g[n] += st * t.distances[n] / t.baseline;
  const double inv_m = 1.0 / static_cast<double>(prob.others.size());
  for (const auto& o : prob.others) {
    const double so = detail::sign_or_zero(sensitivity_deviation(o, w));
    if (so == 0.0) continue;
    const double scale = -so * inv_m / o.baseline;
    for (std::size_t n = 0; n < g.size(); ++n) g[n] += scale * o.distances[n];
  }
  return g;
}

struct OptimizerConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 50;
  std::size_t max_iters = 10000;
  bool nonneg_projection = true;

  void validate() const {
    if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
      throw ArgumentError("learning rate and epsilon must be positive");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ArgumentError("Adam betas must lie in (0, 1)");
    }
    if (patience < 1) throw ArgumentError("patience must be at least 1");
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate}, {"beta1", beta1},
            {"beta2", beta2},                 {"epsilon", epsilon},
            {"patience", patience},           {"max_iters", max_iters},
            {"nonneg_projection", nonneg_projection}};
  }
};

struct TraceEntry {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct OptimizeResult {
  WeightVector weights;
  std::vector<TraceEntry> trace;
  std::size_t best_iteration = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Adam on the analytic subgradient, starting from uniform weights. Returns
/// the weights with the lowest validation loss seen (iteration 0 included).
/// Without a validation problem the training loss is monitored instead.
inline OptimizeResult optimize_weights(const AttributeProblem& train,
                                       const AttributeProblem* val,
                                       const OptimizerConfig& cfg = {}) {
  cfg.validate();
  train.validate();
  const AttributeProblem& monitor = val ? *val : train;
  monitor.validate();
  const std::size_t n = train.target.size();
  if (monitor.target.size() != n) throw ArgumentError("validation pairs have a different neuron count");
  if (n == 0) throw ArgumentError("no neurons to weight");

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<double> m(n, 0.0), v(n, 0.0);

  auto checked = [](double x) {
    if (!std::isfinite(x)) throw NumericError("loss became non-finite");
    return x;
  };

  OptimizeResult res;
  double best = checked(attribute_loss(monitor, w));
  std::vector<double> best_w = w;
  res.trace.push_back({0, checked(attribute_loss(train, w)), best});

  double b1t = 1.0, b2t = 1.0;
  std::size_t since_best = 0;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const auto g = attribute_loss_gradient(train, w);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / (1.0 - b1t);
      const double vh = v[i] / (1.0 - b2t);
      w[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
      if (cfg.nonneg_projection) w[i] = std::max(w[i], 0.0);
    }
    const double tl = checked(attribute_loss(train, w));
    const double vl = checked(attribute_loss(monitor, w));
    res.trace.push_back({it, tl, vl});
    if (vl < best) {
      best = vl;
      best_w = w;
      res.best_iteration = it;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }
  res.best_val_loss = best;
  res.weights = WeightVector(std::move(best_w), cfg.nonneg_projection);
  return res;
}

/// Top-k neurons by distance, descending; ties go to the lower flat index,
/// which is (layer, neuron) order.
inline std::vector<NeuronId> select_sensitive_neurons(std::span<const double> distances,
                                                      const LayerTable& layers, std::size_t k) {
  if (distances.size() != total_neurons(layers)) {
    throw ArgumentError("distance vector does not match the layer table");
  }
  if (k > distances.size()) {
    throw ArgumentError("k = " + std::to_string(k) + " exceeds the " +
                        std::to_string(distances.size()) + " available neurons");
  }
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return distances[a] > distances[b]; });
  std::vector<NeuronId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(neuron_at(layers, order[i]));
  return out;
}

}  // namespace vdna
