#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "support/fixture.hpp"
#include "vdna/actio.hpp"

using namespace vdna;
using vdna::fixture::TempDir;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Actio, FileSizeMatchesLayout) {
  TempDir dir;
  const auto h = fixture::make_header({3, 2});
  fixture::RecordGenerator gen(h, {4, 5}, 1);
  const auto recs = gen.take(3);
  write_dump(dir.file("a.act"), h, recs);

  const auto meta = h.to_json().dump();
  std::size_t expected = 8 + 4 + 4 + meta.size();
  for (const auto& r : recs) expected += 4 + r.image_id.size() + (4 + 3 * 4 * 4) + (4 + 2 * 5 * 4);
  EXPECT_EQ(std::filesystem::file_size(dir.file("a.act")), expected);
}

TEST(Actio, EmptyStreamHasHeaderOnly) {
  TempDir dir;
  const auto h = fixture::make_header({2});
  write_dump(dir.file("e.act"), h, std::vector<ImageRecord>{});
  const auto [header, recs] = read_dump(dir.file("e.act"));
  EXPECT_EQ(header, h);
  EXPECT_TRUE(recs.empty());
}

TEST(Actio, RoundTripIsByteIdentical) {
  TempDir dir;
  const auto h = fixture::make_header({5, 3, 7});
  fixture::RecordGenerator gen(h, {9, 4, 1}, 42);
  const auto recs = gen.take(100);
  write_dump(dir.file("a.act"), h, recs);

  const auto [header, back] = read_dump(dir.file("a.act"));
  EXPECT_EQ(header, h);
  ASSERT_EQ(back, recs);
  write_dump(dir.file("b.act"), header, back);
  EXPECT_EQ(slurp(dir.file("a.act")), slurp(dir.file("b.act")));
}

TEST(Actio, SpatialSizeMayVaryBetweenImages) {
  TempDir dir;
  const auto h = fixture::make_header({2});
  fixture::RecordGenerator small(h, {3}, 1), large(h, {8}, 2);
  std::vector<ImageRecord> recs{small.next(), large.next()};
  write_dump(dir.file("v.act"), h, recs);
  EXPECT_EQ(read_dump(dir.file("v.act")).second, recs);
}

TEST(Actio, RejectsBadMagic) {
  TempDir dir;
  const auto h = fixture::make_header({2});
  write_dump(dir.file("a.act"), h, std::vector<ImageRecord>{});
  auto bytes = slurp(dir.file("a.act"));
  bytes[3] = 'X';
  std::ofstream(dir.file("bad.act"), std::ios::binary) << bytes;
  try {
    DumpReader reader(dir.file("bad.act"));
    FAIL() << "expected a FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }
}

TEST(Actio, RejectsUnknownVersion) {
  TempDir dir;
  write_dump(dir.file("a.act"), fixture::make_header({2}), std::vector<ImageRecord>{});
  auto bytes = slurp(dir.file("a.act"));
  bytes[8] = 2;
  std::ofstream(dir.file("v2.act"), std::ios::binary) << bytes;
  EXPECT_THROW(DumpReader{dir.file("v2.act")}, FormatError);
}

TEST(Actio, NanIsReportedWithImageLayerAndNeuron) {
  TempDir dir;
  const auto h = fixture::make_header({10});
  fixture::RecordGenerator gen(h, {2}, 3);
  auto rec = gen.next();
  write_dump(dir.file("a.act"), h, std::vector<ImageRecord>{rec});

  // Patch neuron 7, spatial position 1 to NaN.
  auto bytes = slurp(dir.file("a.act"));
  const std::size_t values_at = bytes.size() - 10 * 2 * sizeof(float);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + values_at + (7 * 2 + 1) * sizeof(float), &nan, sizeof(float));
  std::ofstream(dir.file("nan.act"), std::ios::binary) << bytes;

  DumpReader reader(dir.file("nan.act"));
  ImageRecord back;
  try {
    reader.next(back);
    FAIL() << "expected a FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("neuron 7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("layer0"), std::string::npos) << msg;
    EXPECT_NE(msg.find(rec.image_id), std::string::npos) << msg;
  }
}

TEST(Actio, WriterRejectsNonFiniteAndWrongShape) {
  TempDir dir;
  const auto h = fixture::make_header({2});
  DumpWriter w(dir.file("a.act"), h);
  ImageRecord rec{"x", {{1, {1.0f, std::numeric_limits<float>::infinity()}}}};
  EXPECT_THROW(w.write(rec), FormatError);
  ImageRecord short_rec{"y", {{2, {1.0f, 2.0f, 3.0f}}}};
  EXPECT_THROW(w.write(short_rec), FormatError);
  ImageRecord missing_layer{"z", {}};
  EXPECT_THROW(w.write(missing_layer), FormatError);
}

TEST(Actio, TruncatedRecordIsRejected) {
  TempDir dir;
  const auto h = fixture::make_header({4});
  fixture::RecordGenerator gen(h, {3}, 5);
  write_dump(dir.file("a.act"), h, gen.take(2));
  auto bytes = slurp(dir.file("a.act"));
  bytes.resize(bytes.size() - 5);
  std::ofstream(dir.file("t.act"), std::ios::binary) << bytes;
  DumpReader reader(dir.file("t.act"));
  ImageRecord rec;
  EXPECT_TRUE(reader.next(rec));
  EXPECT_THROW(reader.next(rec), FormatError);
}

TEST(Actio, HugeLengthFieldDoesNotAllocate) {
  TempDir dir;
  const auto h = fixture::make_header({4});
  write_dump(dir.file("a.act"), h, std::vector<ImageRecord>{});
  auto bytes = slurp(dir.file("a.act"));
  bytes += std::string("\xff\xff\xff\x7f", 4);
  std::ofstream(dir.file("h.act"), std::ios::binary) << bytes;
  DumpReader reader(dir.file("h.act"));
  ImageRecord rec;
  EXPECT_THROW(reader.next(rec), FormatError);
}

TEST(Actio, HeaderValidation) {
  TempDir dir;
  DumpHeader dup{"x", {{"a", 2}, {"a", 3}}};
  EXPECT_THROW(DumpWriter(dir.file("d.act"), dup), FormatError);
  DumpHeader empty_layer{"x", {{"a", 0}}};
  EXPECT_THROW(DumpWriter(dir.file("z.act"), empty_layer), FormatError);
  EXPECT_THROW(DumpReader(dir.file("missing.act")), IoError);
}
