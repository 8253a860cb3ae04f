#pragma once

// The VDNA container: one distribution per neuron (histogram or Gaussian
// moments) plus the metadata needed to decide whether two are comparable.
//
// VDNA0001 file layout (little-endian):
//   "VDNA0001" | u32 version=1 | u32 meta_len | meta JSON
//   u64 raw_payload_len | u64 compressed_len | DEFLATE(payload) | u32 CRC-32(payload)
// Payload, neurons in layer order:
//   hist:  B x u64 counts per neuron
//   gauss: f64 sum, f64 sum_sq per neuron (value counts are per layer, in meta)

#include <algorithm>
#include <cstdint>
#include <future>
#include <string>
#include <variant>
#include <vector>

#include "vdna/actio.hpp"
#include "vdna/calib.hpp"
#include "vdna/detail/binio.hpp"
#include "vdna/detail/deflate.hpp"
#include "vdna/dist.hpp"
#include "vdna/error.hpp"
#include "vdna/layers.hpp"

namespace vdna {

inline constexpr std::string_view kVdnaMagic = "VDNA0001";
inline constexpr std::uint32_t kVdnaVersion = 1;

enum class Kind { kHist, kGauss };

inline std::string to_string(Kind k) { return k == Kind::kHist ? "hist" : "gauss"; }

inline Kind kind_from_string(const std::string& s) {
  if (s == "hist") return Kind::kHist;
  if (s == "gauss") return Kind::kGauss;
  throw ArgumentError("unknown VDNA kind '" + s + "' (expected hist or gauss)");
}

struct FitOptions {
  Kind kind = Kind::kHist;
  std::uint32_t bins = kDefaultBins;
  DegeneratePolicy degenerate = DegeneratePolicy::kConstantZero;
};

class Vdna {
 public:
  Vdna() = default;

  /// A VDNA with zero images; the identity element of merge.
  static Vdna empty(Kind kind, std::string extractor_id, LayerTable layers,
                    std::uint32_t bins, std::string calibration) {
    validate_layers(layers);
    Vdna v;
    v.kind_ = kind;
    v.extractor_id_ = std::move(extractor_id);
    v.layers_ = std::move(layers);
    v.calibration_ = std::move(calibration);
    const auto n = total_neurons(v.layers_);
    if (kind == Kind::kHist) {
      if (bins == 0) throw ArgumentError("bins must be positive");
      v.bins_ = bins;
      v.dists_ = std::vector<Histogram>(n, Histogram(bins));
    } else {
      v.bins_ = 0;
      v.dists_ = std::vector<GaussianMoments>(n);
    }
    return v;
  }

  static Vdna empty_for(const CalibrationTable& cal, const FitOptions& opt) {
    return empty(opt.kind, cal.extractor_id(), cal.layers(),
                 opt.kind == Kind::kHist ? opt.bins : 0, cal.fingerprint());
  }

  Kind kind() const { return kind_; }
  const std::string& extractor_id() const { return extractor_id_; }
  const LayerTable& layers() const { return layers_; }
  std::uint32_t bins() const { return bins_; }
  std::uint64_t n_images() const { return n_images_; }
  const std::string& calibration() const { return calibration_; }
  std::size_t neuron_count() const {
    return std::visit([](const auto& d) { return d.size(); }, dists_);
  }

  const std::vector<Histogram>& histograms() const {
    if (kind_ != Kind::kHist) throw IncompatibleError("VDNA holds Gaussians, not histograms");
    return std::get<std::vector<Histogram>>(dists_);
  }
  const std::vector<GaussianMoments>& gaussians() const {
    if (kind_ != Kind::kGauss) throw IncompatibleError("VDNA holds histograms, not Gaussians");
    return std::get<std::vector<GaussianMoments>>(dists_);
  }
  std::vector<Histogram>& mutable_histograms() {
    return const_cast<std::vector<Histogram>&>(std::as_const(*this).histograms());
  }
  std::vector<GaussianMoments>& mutable_gaussians() {
    return const_cast<std::vector<GaussianMoments>&>(std::as_const(*this).gaussians());
  }
  void set_n_images(std::uint64_t n) { n_images_ = n; }

  /// Normalizes every activation of one image and accumulates it.
  void add_image(const ImageRecord& rec, const CalibrationTable& cal,
                 DegeneratePolicy policy = DegeneratePolicy::kConstantZero) {
    if (rec.layers.size() != layers_.size()) {
      throw IncompatibleError("image '" + rec.image_id + "' does not match the layer table");
    }
    std::vector<double> scratch;
    std::size_t flat = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& act = rec.layers[l];
      if (act.values.size() != std::size_t{layers_[l].neurons} * act.spatial_size) {
        throw FormatError("layer '" + layers_[l].name + "' of image '" + rec.image_id +
                          "' has the wrong number of values");
      }
      for (std::size_t n = 0; n < layers_[l].neurons; ++n, ++flat) {
        const auto& r = cal.range(flat);
        if (!r.calibrated()) {
          throw ArgumentError("neuron " + std::to_string(n) + " of layer '" +
                              layers_[l].name + "' is uncalibrated");
        }
        const auto raw = act.neuron(n);
        scratch.assign(raw.size(), 0.0);
        if (r.degenerate()) {
          if (policy == DegeneratePolicy::kError) {
            throw NumericError("neuron " + std::to_string(n) + " of layer '" +
                               layers_[l].name + "' is constant over the calibration data");
          }
        } else {
          const double c = r.center();
          const double inv = 1.0 / r.half_width();
          for (std::size_t s = 0; s < raw.size(); ++s) {
            scratch[s] = std::clamp((raw[s] - c) * inv, -1.0, 1.0);
          }
        }
        std::visit([&](auto& d) { d[flat].accumulate(std::span<const double>(scratch)); },
                   dists_);
      }
    }
    ++n_images_;
  }

  /// Throws IncompatibleError naming the first field that differs.
  void check_comparable(const Vdna& other) const {
    if (kind_ != other.kind_) throw IncompatibleError("VDNAs differ in kind");
    if (extractor_id_ != other.extractor_id_) {
      throw IncompatibleError("VDNAs differ in extractor_id ('" + extractor_id_ +
                              "' vs '" + other.extractor_id_ + "')");
    }
    if (layers_ != other.layers_) throw IncompatibleError("VDNAs differ in layers");
    if (bins_ != other.bins_) {
      throw IncompatibleError("VDNAs differ in bins (" + std::to_string(bins_) + " vs " +
                              std::to_string(other.bins_) + ")");
    }
    if (calibration_ != other.calibration_) {
      throw IncompatibleError("VDNAs differ in calibration");
    }
  }

  Vdna& merge(const Vdna& other) {
    check_comparable(other);
    std::visit(
        [&](auto& mine) {
          using Vec = std::decay_t<decltype(mine)>;
          const auto& theirs = std::get<Vec>(other.dists_);
          for (std::size_t i = 0; i < mine.size(); ++i) mine[i].merge(theirs[i]);
        },
        dists_);
    n_images_ += other.n_images_;
    return *this;
  }

  void save(const std::string& path) const;
  static Vdna load(const std::string& path);

  friend bool operator==(const Vdna&, const Vdna&) = default;

 private:
  friend struct VdnaCodec;

  Kind kind_ = Kind::kHist;
  std::string extractor_id_;
  LayerTable layers_;
  std::uint32_t bins_ = 0;
  std::uint64_t n_images_ = 0;
  std::string calibration_;
  std::variant<std::vector<Histogram>, std::vector<GaussianMoments>> dists_;
};

inline Vdna merged(Vdna a, const Vdna& b) {
  a.merge(b);
  return a;
}

/// Header-level facts about a saved VDNA, readable without inflating it.
struct VdnaFileInfo {
  Kind kind = Kind::kHist;
  std::string extractor_id;
  LayerTable layers;
  std::uint32_t bins = 0;
  std::uint64_t n_images = 0;
  std::string calibration;
  std::uint64_t payload_bytes = 0;
  std::uint64_t compressed_bytes = 0;
  std::uint64_t file_bytes = 0;
};

struct VdnaCodec {
  static nlohmann::json meta(const Vdna& v) {
    nlohmann::json m = {{"kind", to_string(v.kind_)},
                        {"extractor_id", v.extractor_id_},
                        {"layers", layers_to_json(v.layers_)},
                        {"bins", v.bins_},
                        {"n_images", v.n_images_},
                        {"calibration", v.calibration_}};
    if (v.kind_ == Kind::kGauss) {
      const auto& g = v.gaussians();
      const auto offsets = layer_offsets(v.layers_);
      std::vector<std::uint64_t> counts;
      for (std::size_t l = 0; l < v.layers_.size(); ++l) {
        const auto c = g[offsets[l]].count;
        for (std::size_t i = offsets[l]; i < offsets[l + 1]; ++i) {
          if (g[i].count != c) {
            throw FormatError("value counts differ within layer '" + v.layers_[l].name +
                              "'; cannot store as VDNA0001");
          }
        }
        counts.push_back(c);
      }
      m["layer_counts"] = counts;
    }
    return m;
  }

  static std::string payload(const Vdna& v) {
    std::string raw;
    if (v.kind_ == Kind::kHist) {
      raw.reserve(v.neuron_count() * v.bins_ * sizeof(std::uint64_t));
      for (const auto& h : v.histograms()) {
        for (auto c : h.counts()) detail::put_le<std::uint64_t>(raw, c);
      }
    } else {
      raw.reserve(v.neuron_count() * 2 * sizeof(double));
      for (const auto& g : v.gaussians()) {
        detail::put_le<double>(raw, g.sum);
        detail::put_le<double>(raw, g.sum_sq);
      }
    }
    return raw;
  }

  static Vdna from_meta(const nlohmann::json& m) {
    const auto kind = kind_from_string(detail::json_get<std::string>(m, "kind"));
    if (!m.contains("layers")) throw FormatError("metadata has no 'layers'");
    auto v = Vdna::empty(kind, detail::json_get<std::string>(m, "extractor_id"),
                         layers_from_json(m.at("layers")),
                         detail::json_get<std::uint32_t>(m, "bins"),
                         detail::json_get<std::string>(m, "calibration"));
    v.n_images_ = detail::json_get<std::uint64_t>(m, "n_images");
    return v;
  }

  static void fill(Vdna& v, const nlohmann::json& m, std::string_view raw) {
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (v.kind_ == Kind::kHist) {
      if (raw.size() != v.neuron_count() * v.bins_ * sizeof(std::uint64_t)) {
        throw FormatError("payload size does not match layers and bins");
      }
      for (auto& h : v.mutable_histograms()) {
        for (auto& c : h.mutable_counts()) {
          c = detail::get_le<std::uint64_t>(p);
          p += sizeof(std::uint64_t);
        }
      }
    } else {
      if (raw.size() != v.neuron_count() * 2 * sizeof(double)) {
        throw FormatError("payload size does not match layers");
      }
      const auto counts = detail::json_get<std::vector<std::uint64_t>>(m, "layer_counts");
      if (counts.size() != v.layers_.size()) throw FormatError("layer_counts has the wrong length");
      const auto offsets = layer_offsets(v.layers_);
      auto& g = v.mutable_gaussians();
      for (std::size_t l = 0; l < v.layers_.size(); ++l) {
        for (std::size_t i = offsets[l]; i < offsets[l + 1]; ++i) {
          g[i].count = counts[l];
          g[i].sum = detail::get_le<double>(p);
          g[i].sum_sq = detail::get_le<double>(p + sizeof(double));
          p += 2 * sizeof(double);
        }
      }
    }
  }
};

inline void Vdna::save(const std::string& path) const {
  const auto meta = VdnaCodec::meta(*this);
  const auto raw = VdnaCodec::payload(*this);
  const auto packed = detail::deflate_bytes(raw);
  auto out = detail::open_out(path);
  detail::write_envelope(out, kVdnaMagic, kVdnaVersion, meta);
  detail::write_le<std::uint64_t>(out, raw.size());
  detail::write_le<std::uint64_t>(out, packed.size());
  out.write(packed.data(), static_cast<std::streamsize>(packed.size()));
  detail::write_le<std::uint32_t>(out, detail::crc32_of(raw));
  detail::finish_write(out, path);
}

namespace detail {

struct VdnaPreamble {
  nlohmann::json meta;
  std::uint64_t raw_len = 0;
  std::uint64_t packed_len = 0;
  std::uint64_t file_size = 0;
};

inline VdnaPreamble read_vdna_preamble(std::ifstream& in) {
  in.seekg(0, std::ios::end);
  VdnaPreamble p;
  p.file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  p.meta = read_envelope(in, kVdnaMagic, kVdnaVersion).meta;
  p.raw_len = read_le<std::uint64_t>(in, "payload length");
  p.packed_len = read_le<std::uint64_t>(in, "compressed length");
  const auto pos = static_cast<std::uint64_t>(in.tellg());
  if (pos > p.file_size || p.packed_len + 4 > p.file_size - pos) {
    throw FormatError("truncated payload");
  }
  return p;
}

}  // namespace detail

inline Vdna Vdna::load(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    const auto pre = detail::read_vdna_preamble(in);
    Vdna v = VdnaCodec::from_meta(pre.meta);
    std::string packed(pre.packed_len, '\0');
    if (detail::read_some(in, packed.data(), packed.size()) != packed.size()) {
      throw FormatError("truncated payload");
    }
    const auto crc = detail::read_le<std::uint32_t>(in, "checksum");
    const auto raw = detail::inflate_bytes(packed, pre.raw_len);
    if (detail::crc32_of(raw) != crc) throw FormatError("checksum mismatch");
    VdnaCodec::fill(v, pre.meta, raw);
    return v;
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

inline VdnaFileInfo read_vdna_info(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    const auto pre = detail::read_vdna_preamble(in);
    const Vdna shell = VdnaCodec::from_meta(pre.meta);
    VdnaFileInfo info;
    info.kind = shell.kind();
    info.extractor_id = shell.extractor_id();
    info.layers = shell.layers();
    info.bins = shell.bins();
    info.n_images = shell.n_images();
    info.calibration = shell.calibration();
    info.payload_bytes = pre.raw_len;
    info.compressed_bytes = pre.packed_len;
    info.file_bytes = pre.file_size;
    return info;
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

/// Builds a VDNA from one dump stream.
inline Vdna fit(DumpReader& reader, const CalibrationTable& cal, const FitOptions& opt = {}) {
  cal.check_matches(reader.header());
  auto v = Vdna::empty_for(cal, opt);
  ImageRecord rec;
  while (reader.next(rec)) v.add_image(rec, cal, opt.degenerate);
  return v;
}

/// Fits each dump on its own worker and merges the partial VDNAs in input
/// order, so the result does not depend on the worker count.
inline Vdna fit_files(const std::vector<std::string>& paths, const CalibrationTable& cal,
                      const FitOptions& opt = {}, unsigned threads = 1) {
  auto total = Vdna::empty_for(cal, opt);
  threads = std::max(1u, threads);
  for (std::size_t start = 0; start < paths.size(); start += threads) {
    const auto stop = std::min(paths.size(), start + threads);
    std::vector<std::future<Vdna>> parts;
    for (std::size_t i = start; i < stop; ++i) {
      parts.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred,
                                 [&, i] {
                                   DumpReader reader(paths[i]);
                                   return fit(reader, cal, opt);
                                 }));
    }
    for (auto& f : parts) total.merge(f.get());
  }
  return total;
}

}  // namespace vdna
