#pragma once

// VDNAACT1 activation dumps: the interchange format between a model runner
// and the numeric core.
//
//   "VDNAACT1" | u32 version=1 | u32 meta_len | meta JSON
//   per image:  u32 id_len | id bytes
//               per layer: u32 S | N_l * S float32, neuron-major
//
// All integers and floats are little-endian.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vdna/detail/binio.hpp"
#include "vdna/error.hpp"
#include "vdna/layers.hpp"

namespace vdna {

inline constexpr std::string_view kDumpMagic = "VDNAACT1";
inline constexpr std::uint32_t kDumpVersion = 1;

struct DumpHeader {
  std::string extractor_id;
  LayerTable layers;

  void validate() const { validate_layers(layers); }

  nlohmann::json to_json() const {
    return {{"extractor_id", extractor_id}, {"layers", layers_to_json(layers)}};
  }

  static DumpHeader from_json(const nlohmann::json& meta) {
    DumpHeader h;
    h.extractor_id = detail::json_get<std::string>(meta, "extractor_id");
    if (!meta.contains("layers")) throw FormatError("metadata has no 'layers'");
    h.layers = layers_from_json(meta.at("layers"));
    return h;
  }

  friend bool operator==(const DumpHeader&, const DumpHeader&) = default;
};

/// Activations of one layer for one image: neurons x spatial_size values,
/// all spatial values of neuron 0 first.
struct LayerActivations {
  std::uint32_t spatial_size = 0;
  std::vector<float> values;

  std::span<const float> neuron(std::size_t n) const {
    return std::span<const float>(values).subspan(n * spatial_size, spatial_size);
  }

  friend bool operator==(const LayerActivations&, const LayerActivations&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::vector<LayerActivations> layers;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

namespace detail {

inline void check_record_shape(const DumpHeader& header, const ImageRecord& rec) {
  if (rec.layers.size() != header.layers.size()) {
    throw FormatError("image '" + rec.image_id + "' has " +
                      std::to_string(rec.layers.size()) + " layers, header has " +
                      std::to_string(header.layers.size()));
  }
  for (std::size_t l = 0; l < rec.layers.size(); ++l) {
    const auto& info = header.layers[l];
    const auto& act = rec.layers[l];
    if (act.spatial_size < 1) {
      throw FormatError("layer '" + info.name + "' of image '" + rec.image_id +
                        "' has spatial size 0");
    }
    const std::size_t expected = std::size_t{info.neurons} * act.spatial_size;
    if (act.values.size() != expected) {
      throw FormatError("layer '" + info.name + "' of image '" + rec.image_id +
                        "': expected " + std::to_string(expected) +
                        " values, got " + std::to_string(act.values.size()));
    }
  }
}

inline void check_finite(const std::string& image_id, const LayerInfo& info,
                         const LayerActivations& act) {
  for (std::size_t i = 0; i < act.values.size(); ++i) {
    if (!std::isfinite(act.values[i])) {
      throw FormatError("non-finite activation in image '" + image_id +
                        "', layer '" + info.name + "', neuron " +
                        std::to_string(i / act.spatial_size));
    }
  }
}

}  // namespace detail

class DumpWriter {
 public:
  DumpWriter(std::string path, DumpHeader header)
      : path_(std::move(path)), header_(std::move(header)) {
    header_.validate();
    out_ = detail::open_out(path_);
    detail::write_envelope(out_, kDumpMagic, kDumpVersion, header_.to_json());
  }

  DumpWriter(const DumpWriter&) = delete;
  DumpWriter& operator=(const DumpWriter&) = delete;

  ~DumpWriter() {
    if (out_.is_open()) out_.close();
  }

  const DumpHeader& header() const { return header_; }
  std::uint64_t records_written() const { return count_; }

  void write(const ImageRecord& rec) {
    detail::check_record_shape(header_, rec);
    for (std::size_t l = 0; l < rec.layers.size(); ++l) {
      detail::check_finite(rec.image_id, header_.layers[l], rec.layers[l]);
    }
    detail::write_le<std::uint32_t>(out_, static_cast<std::uint32_t>(rec.image_id.size()));
    out_.write(rec.image_id.data(), static_cast<std::streamsize>(rec.image_id.size()));
    for (const auto& act : rec.layers) {
      detail::write_le<std::uint32_t>(out_, act.spatial_size);
      if constexpr (std::endian::native == std::endian::little) {
        out_.write(reinterpret_cast<const char*>(act.values.data()),
                   static_cast<std::streamsize>(act.values.size() * sizeof(float)));
      } else {
        for (float v : act.values) detail::write_le<float>(out_, v);
      }
    }
    if (!out_) throw IoError("write failed for '" + path_ + "'");
    ++count_;
  }

  void close() {
    detail::finish_write(out_, path_);
    out_.close();
  }

 private:
  std::string path_;
  DumpHeader header_;
  std::ofstream out_;
  std::uint64_t count_ = 0;
};

template <typename Records>
void write_dump(const std::string& path, const DumpHeader& header,
                const Records& records) {
  DumpWriter writer(path, header);
  for (const ImageRecord& rec : records) writer.write(rec);
  writer.close();
}

/// Streams records one at a time; only the current record is held in memory.
class DumpReader {
 public:
  explicit DumpReader(std::string path) : path_(std::move(path)) {
    in_ = detail::open_in(path_);
    in_.seekg(0, std::ios::end);
    file_size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
    try {
      auto env = detail::read_envelope(in_, kDumpMagic, kDumpVersion);
      header_ = DumpHeader::from_json(env.meta);
    } catch (const FormatError& e) {
      throw FormatError("'" + path_ + "': " + e.what());
    }
  }

  const DumpHeader& header() const { return header_; }
  const std::string& path() const { return path_; }
  std::uint64_t records_read() const { return count_; }

  /// Fills `rec` with the next record, reusing its buffers. Returns false at
  /// a clean end of file.
  bool next(ImageRecord& rec) {
    std::array<char, 4> probe{};
    const auto got = detail::read_some(in_, probe.data(), probe.size());
    if (got == 0) return false;
    if (got != probe.size()) fail("truncated record header");
    const auto id_len = detail::get_le<std::uint32_t>(
        reinterpret_cast<const unsigned char*>(probe.data()));
    ensure_available(id_len, "image id");
    rec.image_id.resize(id_len);
    if (detail::read_some(in_, rec.image_id.data(), id_len) != id_len) {
      fail("truncated image id");
    }
    rec.layers.resize(header_.layers.size());
    for (std::size_t l = 0; l < header_.layers.size(); ++l) {
      const auto& info = header_.layers[l];
      auto& act = rec.layers[l];
      act.spatial_size = read_u32("spatial size of layer '" + info.name + "'");
      if (act.spatial_size < 1) {
        fail("image '" + rec.image_id + "', layer '" + info.name +
             "': spatial size 0");
      }
      const std::uint64_t count = std::uint64_t{info.neurons} * act.spatial_size;
      ensure_available(count * sizeof(float),
                       "layer '" + info.name + "' of image '" + rec.image_id + "'");
      act.values.resize(count);
      const std::size_t bytes = count * sizeof(float);
      if (detail::read_some(in_, reinterpret_cast<char*>(act.values.data()), bytes) != bytes) {
        fail("truncated layer '" + info.name + "' of image '" + rec.image_id + "'");
      }
      if constexpr (std::endian::native != std::endian::little) {
        for (auto& v : act.values) v = detail::byteswap_if_big(v);
      }
      try {
        detail::check_finite(rec.image_id, info, act);
      } catch (const FormatError& e) {
        fail(e.what());
      }
    }
    ++count_;
    return true;
  }

  std::optional<ImageRecord> next() {
    ImageRecord rec;
    if (!next(rec)) return std::nullopt;
    return rec;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("'" + path_ + "': " + what);
  }

  std::uint32_t read_u32(const std::string& what) {
    std::array<unsigned char, 4> buf{};
    if (detail::read_some(in_, reinterpret_cast<char*>(buf.data()), 4) != 4) {
      fail("truncated " + what);
    }
    return detail::get_le<std::uint32_t>(buf.data());
  }

  // Rejects lengths that run past the end of the file before allocating.
  void ensure_available(std::uint64_t bytes, const std::string& what) {
    const auto pos = static_cast<std::uint64_t>(in_.tellg());
    if (pos > file_size_ || bytes > file_size_ - pos) fail("truncated " + what);
  }

  std::string path_;
  std::ifstream in_;
  std::uint64_t file_size_ = 0;
  DumpHeader header_;
  std::uint64_t count_ = 0;
};

/// Reads a whole dump into memory. Intended for tests and small inputs.
inline std::pair<DumpHeader, std::vector<ImageRecord>> read_dump(const std::string& path) {
  DumpReader reader(path);
  std::vector<ImageRecord> records;
  ImageRecord rec;
  while (reader.next(rec)) records.push_back(rec);
  return {reader.header(), std::move(records)};
}

}  // namespace vdna
