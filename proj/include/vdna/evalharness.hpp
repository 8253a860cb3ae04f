#pragma once

// Evaluation protocols: ranking items against a reference VDNA,
// precision-recall/AUC over a ranking, and the cross-dataset-generalisation
// discrepancy between predicted and observed training-set rankings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "vdna/detail/csv.hpp"
#include "vdna/error.hpp"
#include "vdna/metrics.hpp"
#include "vdna/vdna.hpp"
#include "vdna/weights.hpp"

namespace vdna {

struct RankedEntry {
  std::string id;
  double distance = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

using RankedList = std::vector<RankedEntry>;

inline void sort_ranked(RankedList& list) {
  std::sort(list.begin(), list.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
}

struct RankItem {
  std::string id;
  const Vdna* dna = nullptr;
};

/// Weighted distance of every item to the reference, ascending.
inline RankedList rank_against_reference(const Vdna& reference, const std::vector<RankItem>& items,
                                         const WeightVector& w, unsigned threads = 1) {
  RankedList out(items.size());
  auto score = [&](std::size_t i) {
    const auto d = neuron_distances(reference, *items[i].dna);
    const double s = weighted_sum(d, w);
    if (!std::isfinite(s)) throw NumericError("non-finite distance for item '" + items[i].id + "'");
    out[i] = {items[i].id, s};
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(items.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) score(i);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned t = 0; t < threads; ++t) {
      jobs.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t i = t; i < items.size(); i += threads) score(i);
      }));
    }
    for (auto& j : jobs) j.get();
  }
  sort_ranked(out);
  return out;
}

inline void write_ranked_csv(const std::string& path, const RankedList& list) {
  auto out = detail::open_out(path);
  out << "id,distance\n";
  for (const auto& e : list) out << e.id << ',' << detail::format_double(e.distance) << '\n';
  detail::finish_write(out, path);
}

inline RankedList read_ranked_csv(const std::string& path) {
  const auto rows = detail::read_csv(path);
  if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "id") {
    throw FormatError("'" + path + "': expected header 'id,distance'");
  }
  RankedList list;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw FormatError("'" + path + "': row " + std::to_string(r) + " needs 2 cells");
    list.push_back({rows[r][0], detail::parse_double(rows[r][1], path)});
  }
  for (std::size_t i = 1; i < list.size(); ++i) {
    if (list[i].distance < list[i - 1].distance) {
      throw FormatError("'" + path + "': distances are not sorted ascending");
    }
  }
  return list;
}

struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
  double auc = 0.0;
};

/// Precision and recall of every prefix of the ranking. AUC integrates
/// precision over recall with the trapezoid rule, anchored at
/// (recall 0, precision@1).
inline PrCurve pr_curve(const RankedList& ranked, const std::unordered_set<std::string>& positives) {
  if (positives.empty()) throw ArgumentError("precision-recall needs at least one positive");
  std::unordered_set<std::string> ids;
  for (const auto& e : ranked) ids.insert(e.id);
  for (const auto& p : positives) {
    if (!ids.count(p)) throw ArgumentError("positive '" + p + "' is not in the ranking");
  }
  PrCurve c;
  const double np = static_cast<double>(positives.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    tp += positives.count(ranked[k].id);
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    c.recall.push_back(static_cast<double>(tp) / np);
  }
  double prev_r = 0.0;
  double prev_p = c.precision.empty() ? 0.0 : c.precision.front();
  for (std::size_t k = 0; k < c.precision.size(); ++k) {
    c.auc += (c.recall[k] - prev_r) * 0.5 * (c.precision[k] + prev_p);
    prev_r = c.recall[k];
    prev_p = c.precision[k];
  }
  return c;
}

/// mIoU of models trained on each training set and evaluated on each
/// validation set, with a predicted distance for each (validation, training)
/// pair. Only the order of predicted distances per validation set matters.
struct CrossGenTable {
  std::vector<std::string> validation;
  std::vector<std::string> training;
  std::vector<std::vector<double>> miou;       // [v][t]
  std::vector<std::vector<double>> predicted;  // [v][t]

  void validate() const {
    auto complete = [&](const std::vector<std::vector<double>>& m, const char* what) {
      if (m.size() != validation.size()) throw ArgumentError(std::string(what) + " matrix is incomplete");
      for (const auto& row : m) {
        if (row.size() != training.size()) throw ArgumentError(std::string(what) + " matrix is incomplete");
        for (double x : row) {
          if (!std::isfinite(x)) throw NumericError(std::string(what) + " matrix has a non-finite entry");
        }
      }
    };
    if (validation.empty() || training.empty()) throw ArgumentError("empty cross-generalisation table");
    complete(miou, "mIoU");
    complete(predicted, "prediction");
  }
};

namespace detail {

struct NamedMatrix {
  std::vector<std::string> rows, cols;
  std::vector<std::vector<double>> values;
};

// Header row = training sets, first column = validation sets.
inline NamedMatrix read_named_matrix(const std::string& path) {
  const auto csv = read_csv(path);
  if (csv.size() < 2 || csv[0].size() < 2) throw FormatError("'" + path + "': matrix CSV is empty");
  NamedMatrix m;
  m.cols.assign(csv[0].begin() + 1, csv[0].end());
  for (std::size_t r = 1; r < csv.size(); ++r) {
    if (csv[r].size() != csv[0].size()) {
      throw FormatError("'" + path + "': row " + std::to_string(r) + " has " +
                        std::to_string(csv[r].size()) + " cells, expected " +
                        std::to_string(csv[0].size()));
    }
    m.rows.push_back(csv[r][0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < csv[r].size(); ++c) row.push_back(parse_double(csv[r][c], path));
    m.values.push_back(std::move(row));
  }
  return m;
}

inline std::size_t index_of(const std::vector<std::string>& names, const std::string& name,
                            const std::string& context) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ArgumentError(context + ": missing entry for '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace detail

/// Reads the mIoU and prediction matrices; the prediction may list rows and
/// columns in any order but must cover exactly the same names.
inline CrossGenTable read_crossgen_csv(const std::string& miou_path, const std::string& pred_path) {
  const auto mi = detail::read_named_matrix(miou_path);
  const auto pr = detail::read_named_matrix(pred_path);
  if (pr.rows.size() != mi.rows.size() || pr.cols.size() != mi.cols.size()) {
    throw ArgumentError("prediction matrix shape differs from the mIoU matrix");
  }
  CrossGenTable t{mi.rows, mi.cols, mi.values, {}};
  t.predicted.assign(t.validation.size(), std::vector<double>(t.training.size()));
  for (std::size_t v = 0; v < t.validation.size(); ++v) {
    const auto pv = detail::index_of(pr.rows, t.validation[v], pred_path);
    for (std::size_t c = 0; c < t.training.size(); ++c) {
      t.predicted[v][c] = pr.values[pv][detail::index_of(pr.cols, t.training[c], pred_path)];
    }
  }
  t.validate();
  return t;
}

/// Training-set indices for one validation set, best mIoU first.
inline std::vector<std::size_t> ground_truth_order(const CrossGenTable& t, std::size_t v) {
  std::vector<std::size_t> order(t.training.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (t.miou[v][a] != t.miou[v][b]) return t.miou[v][a] > t.miou[v][b];
    return t.training[a] < t.training[b];
  });
  return order;
}

/// Training-set indices for one validation set, smallest predicted distance first.
inline std::vector<std::size_t> predicted_order(const CrossGenTable& t, std::size_t v) {
  std::vector<std::size_t> order(t.training.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (t.predicted[v][a] != t.predicted[v][b]) return t.predicted[v][a] < t.predicted[v][b];
    return t.training[a] < t.training[b];
  });
  return order;
}

/// Mean over (v, i) of |mIoU_v(gt_v[i]) - mIoU_v(pred_v[i])|, for explicit
/// predicted orderings (one permutation of training indices per validation set).
inline double discrepancy_for_orderings(const CrossGenTable& t,
                                        const std::vector<std::vector<std::size_t>>& orderings) {
  if (orderings.size() != t.validation.size()) throw ArgumentError("one ordering per validation set required");
  double sum = 0.0;
  for (std::size_t v = 0; v < t.validation.size(); ++v) {
    const auto gt = ground_truth_order(t, v);
    const auto& pred = orderings[v];
    if (pred.size() != gt.size()) throw ArgumentError("ordering for '" + t.validation[v] + "' is incomplete");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      sum += std::abs(t.miou[v][gt[i]] - t.miou[v].at(pred[i]));
    }
  }
  return sum / static_cast<double>(t.validation.size() * t.training.size());
}

inline double crossgen_discrepancy(const CrossGenTable& t) {
  t.validate();
  std::vector<std::vector<std::size_t>> orderings;
  for (std::size_t v = 0; v < t.validation.size(); ++v) orderings.push_back(predicted_order(t, v));
  return discrepancy_for_orderings(t, orderings);
}

struct BaselineStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  std::vector<double> samples;
};

/// Discrepancy of uniformly random predicted orderings, drawn independently
/// per validation set and trial.
inline BaselineStats random_ordering_baseline(const CrossGenTable& t, std::size_t trials,
                                              std::uint64_t seed) {
  if (trials < 2) throw ArgumentError("random baseline needs at least 2 trials");
  if (t.miou.size() != t.validation.size()) throw ArgumentError("incomplete mIoU matrix");
  std::mt19937_64 rng(seed);
  BaselineStats s;
  std::vector<std::vector<std::size_t>> orderings(t.validation.size());
  for (std::size_t k = 0; k < trials; ++k) {
    for (auto& o : orderings) {
      o.resize(t.training.size());
      std::iota(o.begin(), o.end(), 0);
      std::shuffle(o.begin(), o.end(), rng);
    }
    s.samples.push_back(discrepancy_for_orderings(t, orderings));
  }
  s.mean = std::accumulate(s.samples.begin(), s.samples.end(), 0.0) / static_cast<double>(trials);
  double ss = 0.0;
  for (double x : s.samples) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(trials - 1));
  return s;
}

}  // namespace vdna
