#include <gtest/gtest.h>

#include <algorithm>
#include <iterator>
#include <random>

#include "support/fixture.hpp"
#include "vdna/vdna.hpp"

using namespace vdna;
using vdna::fixture::TempDir;

namespace {

struct Fixture {
  DumpHeader header = fixture::make_header({4, 3});
  std::vector<ImageRecord> records;
  CalibrationTable cal;

  explicit Fixture(std::size_t n = 10, std::uint64_t seed = 7) {
    fixture::RecordGenerator gen(header, {6, 2}, seed);
    records = gen.take(n);
    cal = fixture::calibrate(header, records);
  }
};

FitOptions hist(std::uint32_t bins = 32) { return {Kind::kHist, bins, DegeneratePolicy::kConstantZero}; }
FitOptions gauss() { return {Kind::kGauss, 0, DegeneratePolicy::kConstantZero}; }

}  // namespace

TEST(Vdna, SingleValueAtCenterLandsInCenterBin) {
  CalibrationTable cal("x", {{"l", 1}});
  cal.observe({"c", {{2, {-1.0f, 1.0f}}}});
  auto v = Vdna::empty_for(cal, hist(4));
  v.add_image({"i", {{2, {0.0f, 0.0f}}}}, cal);
  EXPECT_EQ(v.histograms()[0], Histogram(std::vector<std::uint64_t>{0, 0, 2, 0}));
  EXPECT_EQ(v.n_images(), 1u);
}

TEST(Vdna, SymmetricValuesGiveZeroMean) {
  CalibrationTable cal("x", {{"l", 1}});
  cal.observe({"c", {{2, {3.0f, 7.0f}}}});
  auto v = Vdna::empty_for(cal, gauss());
  v.add_image({"i", {{2, {3.0f, 7.0f}}}}, cal);
  EXPECT_NEAR(v.gaussians()[0].mean(), 0.0, 1e-15);
  EXPECT_NEAR(v.gaussians()[0].stddev(), 1.0 / kCalibrationMargin, 1e-12);
}

TEST(Vdna, FitEqualsMergeOfSingleImageFits) {
  Fixture f;
  for (const auto& opt : {hist(), gauss()}) {
    const auto whole = fixture::fit_records(f.records, f.cal, opt);
    auto acc = Vdna::empty_for(f.cal, opt);
    for (const auto& r : f.records) acc.merge(fixture::fit_records({r}, f.cal, opt));
    EXPECT_EQ(acc.n_images(), 10u);
    if (opt.kind == Kind::kHist) {
      EXPECT_EQ(acc, whole);
    } else {
      for (std::size_t i = 0; i < acc.neuron_count(); ++i) {
        EXPECT_EQ(acc.gaussians()[i].count, whole.gaussians()[i].count);
        EXPECT_NEAR(acc.gaussians()[i].sum, whole.gaussians()[i].sum, 1e-12);
        EXPECT_NEAR(acc.gaussians()[i].sum_sq, whole.gaussians()[i].sum_sq, 1e-12);
      }
    }
  }
}

TEST(Vdna, HistogramFitIsPermutationInvariant) {
  Fixture f;
  auto shuffled = f.records;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(fixture::fit_records(shuffled, f.cal, hist()), fixture::fit_records(f.records, f.cal, hist()));
}

TEST(Vdna, HistogramTotalsFollowSpatialSizes) {
  Fixture f(5);
  const auto v = fixture::fit_records(f.records, f.cal, hist());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(v.histograms()[i].total(), 5u * 6u);
  for (std::size_t i = 4; i < 7; ++i) EXPECT_EQ(v.histograms()[i].total(), 5u * 2u);
}

TEST(Vdna, EmptyIsMergeIdentity) {
  Fixture f;
  const auto v = fixture::fit_records(f.records, f.cal, hist());
  EXPECT_EQ(merged(v, Vdna::empty_for(f.cal, hist())), v);
}

TEST(Vdna, MismatchedMergesNameTheField) {
  Fixture f;
  const auto v = fixture::fit_records(f.records, f.cal, hist());
  auto expect_mismatch = [&](const Vdna& other, const std::string& field) {
    try {
      merged(v, other);
      FAIL() << "expected IncompatibleError for " << field;
    } catch (const IncompatibleError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_mismatch(Vdna::empty_for(f.cal, gauss()), "kind");
  expect_mismatch(Vdna::empty_for(f.cal, hist(16)), "bins");
  expect_mismatch(Vdna::empty(Kind::kHist, "other", f.header.layers, 32, f.cal.fingerprint()), "extractor_id");
  expect_mismatch(Vdna::empty(Kind::kHist, f.header.extractor_id, {{"z", 7}}, 32, f.cal.fingerprint()), "layers");
  expect_mismatch(Vdna::empty(Kind::kHist, f.header.extractor_id, f.header.layers, 32, "0"), "calibration");
}

TEST(Vdna, WrongKindAccessorThrows) {
  Fixture f(2);
  const auto g = fixture::fit_records(f.records, f.cal, gauss());
  EXPECT_THROW(g.histograms(), IncompatibleError);
  EXPECT_NO_THROW(g.gaussians());
}

TEST(Vdna, DegeneratePolicyApplies) {
  CalibrationTable cal("x", {{"l", 1}});
  cal.observe({"c", {{2, {5.0f, 5.0f}}}});
  auto v = Vdna::empty_for(cal, hist(4));
  v.add_image({"i", {{1, {5.0f}}}}, cal);
  EXPECT_EQ(v.histograms()[0], Histogram(std::vector<std::uint64_t>{0, 0, 1, 0}));
  EXPECT_THROW(v.add_image({"i", {{1, {5.0f}}}}, cal, DegeneratePolicy::kError), NumericError);
}

TEST(Vdna, SaveLoadRoundTrip) {
  TempDir dir;
  Fixture f;
  for (const auto& opt : {hist(), gauss()}) {
    const auto v = fixture::fit_records(f.records, f.cal, opt);
    const auto path = dir.file(to_string(opt.kind) + ".vdna");
    v.save(path);
    EXPECT_EQ(Vdna::load(path), v);
  }
}

TEST(Vdna, CorruptedPayloadFailsChecksumOrInflate) {
  TempDir dir;
  Fixture f;
  const auto v = fixture::fit_records(f.records, f.cal, hist());
  v.save(dir.file("a.vdna"));
  std::string bytes;
  {
    std::ifstream in(dir.file("a.vdna"), std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() - 2] ^= 0x5a;
  std::ofstream(dir.file("b.vdna"), std::ios::binary) << bytes;
  EXPECT_THROW(Vdna::load(dir.file("b.vdna")), FormatError);
}

TEST(Vdna, PayloadSizes) {
  TempDir dir;
  const LayerTable vit = [] {
    LayerTable t;
    for (int l = 0; l < 13; ++l) t.push_back({"block" + std::to_string(l), 768});
    return t;
  }();
  ASSERT_EQ(total_neurons(vit), 9984u);

  auto g = Vdna::empty(Kind::kGauss, "vit", vit, 0, "cal");
  g.save(dir.file("g.vdna"));
  EXPECT_EQ(read_vdna_info(dir.file("g.vdna")).payload_bytes, 159744u);

  auto h = Vdna::empty(Kind::kHist, "vit", vit, 1000, "cal");
  EXPECT_EQ(VdnaCodec::payload(h).size(), 79872000u);
  h.save(dir.file("h.vdna"));
  const auto info = read_vdna_info(dir.file("h.vdna"));
  EXPECT_EQ(info.payload_bytes, 79872000u);
  EXPECT_LT(info.compressed_bytes, info.payload_bytes / 100);
}

TEST(Vdna, FitFilesIsIndependentOfThreadCount) {
  TempDir dir;
  Fixture f(12);
  std::vector<std::string> paths;
  for (int s = 0; s < 4; ++s) {
    paths.push_back(dir.file("s" + std::to_string(s) + ".act"));
    write_dump(paths.back(), f.header,
               std::vector<ImageRecord>(f.records.begin() + 3 * s, f.records.begin() + 3 * s + 3));
  }
  const auto one = fit_files(paths, f.cal, gauss(), 1);
  const auto four = fit_files(paths, f.cal, gauss(), 4);
  EXPECT_EQ(one, four);
  EXPECT_EQ(one.n_images(), 12u);
  EXPECT_EQ(fit_files(paths, f.cal, hist(), 3), fixture::fit_records(f.records, f.cal, hist()));
}

TEST(Vdna, FitRejectsDumpFromOtherExtractor) {
  TempDir dir;
  Fixture f(2);
  auto other = f.header;
  other.extractor_id = "different";
  write_dump(dir.file("o.act"), other, std::vector<ImageRecord>{});
  DumpReader reader(dir.file("o.act"));
  EXPECT_THROW(fit(reader, f.cal), IncompatibleError);
}
