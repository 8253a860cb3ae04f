#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdna/detail/binio.hpp"
#include "vdna/error.hpp"

namespace vdna {

inline constexpr std::string_view kWeightsMagic = "VDNAWGT1";
inline constexpr std::uint32_t kWeightsVersion = 1;

/// One scalar weight per neuron (or per layer for layer-wise distances).
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> values, bool nonnegative = true)
      : values_(std::move(values)), nonnegative_(nonnegative) {
    validate();
  }

  static WeightVector uniform(std::size_t n) {
    if (n == 0) throw ArgumentError("uniform weights over zero neurons");
    return WeightVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  /// 1/k on the selected neurons, 0 elsewhere.
  static WeightVector from_selection(std::size_t n, const std::vector<std::size_t>& selected) {
    if (selected.empty()) throw ArgumentError("empty neuron selection");
    std::vector<double> w(n, 0.0);
    for (auto i : selected) {
      if (i >= n) throw ArgumentError("selected neuron " + std::to_string(i) + " out of range");
      w[i] = 1.0;
    }
    std::size_t k = 0;
    for (double x : w) k += x > 0.0;
    for (double& x : w) x /= static_cast<double>(k);
    return WeightVector(std::move(w));
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool nonnegative() const { return nonnegative_; }

  void validate() const {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw NumericError("weight " + std::to_string(i) + " is not finite");
      }
      if (nonnegative_ && values_[i] < 0.0) {
        throw NumericError("weight " + std::to_string(i) + " is negative");
      }
    }
  }

  /// `meta` is free-form provenance (extractor, optimizer config, ...).
  void save(const std::string& path, nlohmann::json meta = nlohmann::json::object()) const {
    meta["neurons"] = values_.size();
    meta["constrained_nonnegative"] = nonnegative_;
    auto out = detail::open_out(path);
    detail::write_envelope(out, kWeightsMagic, kWeightsVersion, meta);
    for (double w : values_) detail::write_le<double>(out, w);
    detail::finish_write(out, path);
  }

  static WeightVector load(const std::string& path, nlohmann::json* meta_out = nullptr) {
    auto in = detail::open_in(path);
    try {
      const auto env = detail::read_envelope(in, kWeightsMagic, kWeightsVersion);
      const auto n = detail::json_get<std::uint64_t>(env.meta, "neurons");
      const auto nonneg = detail::json_get<bool>(env.meta, "constrained_nonnegative");
      std::vector<double> w;
      w.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) w.push_back(detail::read_le<double>(in, "weights"));
      if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after weights");
      }
      if (meta_out) *meta_out = env.meta;
      return WeightVector(std::move(w), nonneg);
    } catch (const Error& e) {
      throw FormatError("'" + path + "': " + e.what());
    }
  }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> values_;
  bool nonnegative_ = true;
};

}  // namespace vdna
