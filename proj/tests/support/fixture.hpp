#pragma once

#include <stdlib.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vdna/actio.hpp"
#include "vdna/calib.hpp"
#include "vdna/vdna.hpp"

namespace vdna::fixture {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "vdna_test_XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw IoError("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline DumpHeader make_header(const std::vector<std::uint32_t>& neurons,
                              std::string extractor = "synthetic-v1") {
  DumpHeader h;
  h.extractor_id = std::move(extractor);
  for (std::size_t l = 0; l < neurons.size(); ++l) {
    h.layers.push_back({"layer" + std::to_string(l), neurons[l]});
  }
  return h;
}

/// Activations drawn from N(shift + 0.1 * neuron, scale^2).
class RecordGenerator {
 public:
  RecordGenerator(DumpHeader header, std::vector<std::uint32_t> spatial, std::uint64_t seed,
                  double shift = 0.0, double scale = 1.0)
      : header_(std::move(header)), spatial_(std::move(spatial)), rng_(seed),
        shift_(shift), scale_(scale) {}

  ImageRecord next() {
    ImageRecord rec;
    rec.image_id = "img" + std::to_string(counter_++);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    for (std::size_t l = 0; l < header_.layers.size(); ++l) {
      LayerActivations act;
      act.spatial_size = spatial_[l];
      for (std::uint32_t n = 0; n < header_.layers[l].neurons; ++n) {
        for (std::uint32_t s = 0; s < spatial_[l]; ++s) {
          act.values.push_back(static_cast<float>(shift_ + 0.1 * n + scale_ * noise(rng_)));
        }
      }
      rec.layers.push_back(std::move(act));
    }
    return rec;
  }

  std::vector<ImageRecord> take(std::size_t n) {
    std::vector<ImageRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

  const DumpHeader& header() const { return header_; }

 private:
  DumpHeader header_;
  std::vector<std::uint32_t> spatial_;
  std::mt19937_64 rng_;
  double shift_;
  double scale_;
  std::uint64_t counter_ = 0;
};

inline CalibrationTable calibrate(const DumpHeader& h, const std::vector<ImageRecord>& recs) {
  auto cal = CalibrationTable::for_dump(h);
  for (const auto& r : recs) cal.observe(r);
  return cal;
}

inline Vdna fit_records(const std::vector<ImageRecord>& recs, const CalibrationTable& cal,
                        const FitOptions& opt) {
  auto v = Vdna::empty_for(cal, opt);
  for (const auto& r : recs) v.add_image(r, cal, opt.degenerate);
  return v;
}

inline std::vector<std::uint64_t> random_counts(std::mt19937_64& rng, std::size_t bins,
                                                std::uint64_t max_total) {
  std::uniform_int_distribution<std::uint64_t> total_d(1, max_total);
  std::uniform_int_distribution<std::size_t> bin_d(0, bins - 1);
  std::vector<std::uint64_t> c(bins, 0);
  const auto total = total_d(rng);
  for (std::uint64_t i = 0; i < total; ++i) ++c[bin_d(rng)];
  return c;
}

}  // namespace vdna::fixture
