#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "octopus/io.hpp"
#include "octopus/ml.hpp"

using namespace octopus;
using testing_helpers::temp_dir;

namespace {

Pullback tiny_pullback() {
  auto pb = make_pullback("tiny", 3, 8, 300);
  std::uint16_t v = 0;
  for (auto& f : pb.frames)
    for (auto& x : f.data()) x = v++;
  return pb;
}

}  // namespace

TEST(Container, RoundTripIsByteIdentical) {
  const auto dir = temp_dir("roundtrip");
  const auto pb = tiny_pullback();
  io::save_pullback(dir, pb);
  const auto back = io::load_pullback(dir);
  EXPECT_EQ(back.frames, pb.frames);
  EXPECT_EQ(back.id, "tiny");
  io::save_pullback(dir / "again", back);
  EXPECT_EQ(io::read_text(dir / "frames.raw"), io::read_text(dir / "again" / "frames.raw"));
  EXPECT_EQ(io::read_text(dir / "meta.json"), io::read_text(dir / "again" / "meta.json"));
}

TEST(Container, FramesAreLittleEndianU16) {
  const auto dir = temp_dir("endian");
  auto pb = make_pullback("e", 1, 8, 300);
  pb.frames[0](0, 0) = 0x1234;
  io::save_pullback(dir, pb);
  const auto bytes = io::read_text(dir / "frames.raw");
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x34);
  EXPECT_EQ(static_cast<unsigned char>(bytes[1]), 0x12);
}

TEST(Container, TruncatedFramesReportActualSize) {
  const auto dir = temp_dir("trunc");
  io::save_pullback(dir, tiny_pullback());
  std::filesystem::resize_file(dir / "frames.raw", 1000);
  try {
    io::load_pullback(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 1000u);
  }
}

TEST(Container, TrailingBytesReportExpectedSize) {
  const auto dir = temp_dir("trail");
  io::save_pullback(dir, tiny_pullback());
  {
    std::ofstream f(dir / "frames.raw", std::ios::binary | std::ios::app);
    f << "xx";
  }
  try {
    io::load_pullback(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 3u * 8 * 300 * 2);
  }
}

TEST(Container, UnknownVersionIsRejected) {
  auto j = io::meta_json({"x", 1, 8, 300, {}});
  j["version"] = 2;
  EXPECT_THROW(io::parse_meta(j.dump()), VersionMismatch);
  j.erase("version");
  EXPECT_EQ(io::parse_meta(j.dump()).n_alines, 8);
  EXPECT_THROW(io::parse_meta("{not json"), FormatError);
}

TEST(Labels, BadCodeReportsItsOffset) {
  LabelVolume v(2, 8, 300);
  std::string bytes = io::encode_labels(v);
  bytes[2500] = 9;
  try {
    io::decode_labels(bytes, 2, 8, 300);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 2500u);
  }
}

TEST(Labels, RoundTrip) {
  const auto dir = temp_dir("labels");
  LabelVolume v(2, 8, 300);
  v.frames[1](3, 7) = code(Label::calcium);
  io::save_labels(dir / "labels.raw", v);
  EXPECT_EQ(io::load_labels(dir / "labels.raw", 2, 8, 300), v);
}

TEST(Probs, OutOfRangeIsAFormatError) {
  const auto dir = temp_dir("probs");
  std::vector<FloatImage> p(1, FloatImage(8, 300, 0.5f));
  io::save_probs(dir / "p.raw", p);
  EXPECT_EQ(io::load_probs(dir / "p.raw", 1, 8, 300)[0](7, 299), 0.5f);
  p[0](0, 3) = 1.5f;
  io::save_probs(dir / "p.raw", p);
  try {
    io::load_probs(dir / "p.raw", 1, 8, 300);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 12u);
  }
}

TEST(Csv, NumbersAreFixedAndNeverNegativeZero) {
  quant::FrameQuant q;
  q.frame = 4;
  q.lumen_area_mm2 = -0.00001;
  q.calc_angle_deg = 90;
  q.flags.segmentation_failed = true;
  const auto rows = io::parse_csv(io::frame_csv({q}));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].size(), 10u);
  EXPECT_EQ(rows[1][0], "4");
  EXPECT_EQ(rows[1][1], "0.0000");
  EXPECT_EQ(rows[1][5], "90.00");
  EXPECT_EQ(rows[1][6], "");
  EXPECT_EQ(rows[1][9], "segmentation_failed");
}

TEST(Csv, StentRowsCarryCoverageWords) {
  stent::StrutRecord s;
  s.frame = 2;
  s.aline = 126;
  s.aline_pos = 126;
  s.covered = true;
  s.coverage_um = 55;
  const auto rows = io::parse_csv(io::stent_csv({s}, 504));
  EXPECT_EQ(rows[1][2], "90.00");
  EXPECT_EQ(rows[1][7], "covered");
  EXPECT_EQ(rows[1][8], "55.0");
}

TEST(ModelFile, RoundTripAndCorruption) {
  ml::Dataset d;
  for (int i = 0; i < 40; ++i) d.add({static_cast<double>(i), static_cast<double>(i % 3)}, i >= 20);
  const auto m = ml::train(d, ml::ModelKind::strut_detector, 3);
  const auto bytes = ml::serialize(m);
  EXPECT_EQ(bytes.substr(0, 4), "OCTM");
  const auto back = ml::deserialize(bytes);
  for (int i = 0; i < 40; ++i) EXPECT_DOUBLE_EQ(back.score(d.x[i]), m.score(d.x[i]));
  EXPECT_EQ(ml::serialize(back), bytes);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ml::deserialize(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(ml::deserialize(bad), VersionMismatch);
  EXPECT_THROW(ml::deserialize(bytes.substr(0, bytes.size() - 3)), FormatError);
}
