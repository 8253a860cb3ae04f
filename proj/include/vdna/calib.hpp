#pragma once

// Per-neuron activation ranges and the normalization to [-1, 1] built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vdna/actio.hpp"
#include "vdna/detail/binio.hpp"
#include "vdna/error.hpp"
#include "vdna/layers.hpp"

namespace vdna {

inline constexpr std::string_view kCalibrationMagic = "VDNACAL1";
inline constexpr std::uint32_t kCalibrationVersion = 1;

/// The observed half-range is widened by this factor around its center.
inline constexpr double kCalibrationMargin = 1.2;

struct NeuronRange {
  double min_seen = std::numeric_limits<double>::infinity();
  double max_seen = -std::numeric_limits<double>::infinity();
  std::uint64_t count = 0;

  void observe(double v) {
    min_seen = std::min(min_seen, v);
    max_seen = std::max(max_seen, v);
    ++count;
  }

  NeuronRange& merge(const NeuronRange& other) {
    min_seen = std::min(min_seen, other.min_seen);
    max_seen = std::max(max_seen, other.max_seen);
    count += other.count;
    return *this;
  }

  bool calibrated() const { return count > 0; }
  bool degenerate() const { return calibrated() && !(max_seen > min_seen); }
  double center() const { return 0.5 * (max_seen + min_seen); }
  double half_width() const { return kCalibrationMargin * 0.5 * (max_seen - min_seen); }

  friend bool operator==(const NeuronRange&, const NeuronRange&) = default;
};

enum class DegeneratePolicy { kConstantZero, kError };

class CalibrationTable {
 public:
  CalibrationTable() = default;
  CalibrationTable(std::string extractor_id, LayerTable layers)
      : extractor_id_(std::move(extractor_id)), layers_(std::move(layers)) {
    validate_layers(layers_);
    offsets_ = layer_offsets(layers_);
    ranges_.resize(offsets_.back());
  }

  static CalibrationTable for_dump(const DumpHeader& header) {
    return CalibrationTable(header.extractor_id, header.layers);
  }

  const std::string& extractor_id() const { return extractor_id_; }
  const LayerTable& layers() const { return layers_; }
  std::size_t neuron_count() const { return ranges_.size(); }
  const NeuronRange& range(std::size_t flat) const { return ranges_.at(flat); }
  NeuronRange& mutable_range(std::size_t flat) { return ranges_.at(flat); }
  std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }

  void check_matches(const DumpHeader& header) const {
    if (header.extractor_id != extractor_id_) {
      throw IncompatibleError("extractor mismatch: calibration is for '" +
                              extractor_id_ + "', dump is from '" +
                              header.extractor_id + "'");
    }
    if (header.layers != layers_) {
      throw IncompatibleError("layer table of dump does not match calibration");
    }
  }

  void observe(const ImageRecord& rec) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& act = rec.layers.at(l);
      for (std::size_t n = 0; n < layers_[l].neurons; ++n) {
        auto& r = ranges_[offsets_[l] + n];
        const auto vals = act.neuron(n);
        const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
        r.min_seen = std::min(r.min_seen, static_cast<double>(*lo));
        r.max_seen = std::max(r.max_seen, static_cast<double>(*hi));
        r.count += vals.size();
      }
    }
  }

  void observe(DumpReader& reader) {
    check_matches(reader.header());
    ImageRecord rec;
    while (reader.next(rec)) observe(rec);
  }

  CalibrationTable& merge(const CalibrationTable& other) {
    if (other.extractor_id_ != extractor_id_ || other.layers_ != layers_) {
      throw IncompatibleError("cannot merge calibration tables of different extractors/layers");
    }
    for (std::size_t i = 0; i < ranges_.size(); ++i) ranges_[i].merge(other.ranges_[i]);
    return *this;
  }

  std::vector<std::size_t> degenerate_neurons() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ranges_.size(); ++i) {
      if (ranges_[i].degenerate()) out.push_back(i);
    }
    return out;
  }

  /// Maps a raw activation to [-1, 1]: (a - center) / half_width, clamped.
  double normalize(std::size_t flat, double a,
                   DegeneratePolicy policy = DegeneratePolicy::kConstantZero) const {
    const auto& r = ranges_.at(flat);
    if (!r.calibrated()) {
      throw ArgumentError("neuron " + std::to_string(flat) + " was never calibrated");
    }
    if (r.degenerate()) {
      if (policy == DegeneratePolicy::kError) {
        throw NumericError("neuron " + std::to_string(flat) +
                           " is constant over the calibration data");
      }
      return 0.0;
    }
    return std::clamp((a - r.center()) / r.half_width(), -1.0, 1.0);
  }

  /// Stable content hash; VDNAs record it to refuse cross-calibration comparisons.
  std::string fingerprint() const {
    std::uint64_t h = detail::fnv1a64(meta_json().dump());
    std::string buf;
    for (const auto& r : ranges_) {
      detail::put_le<double>(buf, r.min_seen);
      detail::put_le<double>(buf, r.max_seen);
    }
    h = detail::fnv1a64(buf, h);
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
  }

  void save(const std::string& path) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (std::size_t n = 1; n < layers_[l].neurons; ++n) {
        if (ranges_[offsets_[l] + n].count != ranges_[offsets_[l]].count) {
          throw FormatError("observation counts differ within layer '" + layers_[l].name + "'");
        }
      }
    }
    auto out = detail::open_out(path);
    detail::write_envelope(out, kCalibrationMagic, kCalibrationVersion, meta_json());
    for (const auto& r : ranges_) {
      detail::write_le<double>(out, r.min_seen);
      detail::write_le<double>(out, r.max_seen);
    }
    detail::finish_write(out, path);
  }

  static CalibrationTable load(const std::string& path) {
    auto in = detail::open_in(path);
    try {
      const auto env = detail::read_envelope(in, kCalibrationMagic, kCalibrationVersion);
      CalibrationTable t(detail::json_get<std::string>(env.meta, "extractor_id"),
                         layers_from_json(env.meta.at("layers")));
      const auto counts = detail::json_get<std::vector<std::uint64_t>>(env.meta, "layer_counts");
      if (counts.size() != t.layers_.size()) {
        throw FormatError("layer_counts has the wrong length");
      }
      for (std::size_t l = 0; l < t.layers_.size(); ++l) {
        for (std::size_t n = 0; n < t.layers_[l].neurons; ++n) {
          auto& r = t.ranges_[t.offsets_[l] + n];
          r.min_seen = detail::read_le<double>(in, "neuron range");
          r.max_seen = detail::read_le<double>(in, "neuron range");
          r.count = counts[l];
          if (r.count > 0 && !(std::isfinite(r.min_seen) && std::isfinite(r.max_seen) &&
                               r.min_seen <= r.max_seen)) {
            throw FormatError("invalid range for neuron " + std::to_string(t.offsets_[l] + n));
          }
        }
      }
      if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after neuron ranges");
      }
      return t;
    } catch (const FormatError& e) {
      throw FormatError("'" + path + "': " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("'" + path + "': " + e.what());
    }
  }

  friend bool operator==(const CalibrationTable& a, const CalibrationTable& b) {
    return a.extractor_id_ == b.extractor_id_ && a.layers_ == b.layers_ &&
           a.ranges_ == b.ranges_;
  }

 private:
  // Every image contributes the same number of values to each neuron of a
  // layer, so observation counts are stored once per layer.
  nlohmann::json meta_json() const {
    std::vector<std::uint64_t> counts;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      counts.push_back(ranges_.empty() ? 0 : ranges_[offsets_[l]].count);
    }
    return {{"extractor_id", extractor_id_},
            {"layers", layers_to_json(layers_)},
            {"layer_counts", counts},
            {"margin", kCalibrationMargin}};
  }

  std::string extractor_id_;
  LayerTable layers_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NeuronRange> ranges_;
};

}  // namespace vdna
