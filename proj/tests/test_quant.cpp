#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "oracles.hpp"
#include "octopus/io.hpp"
#include "octopus/phantom.hpp"
#include "octopus/quant.hpp"

using namespace octopus;
using testing_helpers::small_spec;

namespace {

void expect_matches_oracle(const LabelFrame& lab, const Calibration& cal, const std::string& what) {
  const auto q = quant::frame_quant(0, lab, cal);
  const auto o = oracle::frame_quant(lab, cal);
  const double px = cal.r_pixel_mm();
  const int n = lab.rows();
  EXPECT_NEAR(q.lumen_area_mm2, o.area_mm2, 1e-9) << what;
  EXPECT_NEAR(q.lumen_diam_max_mm, o.diam_max_mm, 2 * px) << what;
  EXPECT_NEAR(q.lumen_diam_min_mm, o.diam_min_mm, 2 * px) << what;
  EXPECT_NEAR(q.lumen_diam_mean_mm, o.diam_mean_mm, px) << what;
  EXPECT_NEAR(q.calc_angle_deg, o.angle_deg, 360.0 / n + 1e-9) << what;
  ASSERT_EQ(q.calc_max_thickness_mm.has_value(), o.max_thick_mm.has_value()) << what;
  if (o.max_thick_mm) {
    EXPECT_NEAR(*q.calc_max_thickness_mm, *o.max_thick_mm, px + 1e-9) << what;
    EXPECT_NEAR(*q.calc_min_depth_mm, *o.min_depth_mm, px + 1e-9) << what;
  }
}

LabelFrame disk_frame(int n, int n_r, double radius_px) {
  LabelFrame f(n, n_r, 0);
  for (int a = 0; a < n; ++a)
    for (int r = 0; r < std::lround(radius_px); ++r) f(a, r) = 1;
  return f;
}

}  // namespace

TEST(FrameQuant, AgreesWithLabelScanOracle) {
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    const auto ph = phantom::generate(small_spec(seed, 4, 128, 700, 0), seed);
    for (int f = 0; f < 4; ++f)
      expect_matches_oracle(ph.truth.labels.frames[f], ph.pullback.calibration,
                            "seed " + std::to_string(seed) + " frame " + std::to_string(f));
  }
}

TEST(FrameQuant, CircleAreaAndDiameters) {
  Calibration cal;
  const int n = 504;
  const double R = 300;
  const auto q = quant::frame_quant(0, disk_frame(n, 600, R), cal);
  const double mm = R * cal.r_pixel_mm();
  EXPECT_NEAR(q.lumen_area_mm2, std::numbers::pi * mm * mm, 0.005 * std::numbers::pi * mm * mm);
  EXPECT_NEAR(q.lumen_diam_mean_mm, 2 * mm, 0.01);
  EXPECT_NEAR(q.lumen_diam_max_mm, 2 * mm, 0.01);
  EXPECT_NEAR(q.lumen_diam_min_mm, 2 * mm, 0.01);
  EXPECT_FALSE(q.calc_max_thickness_mm.has_value());
  EXPECT_DOUBLE_EQ(q.calc_angle_deg, 0);
}

TEST(FrameQuant, EllipseArea) {
  phantom::PhantomSpec s;
  s.n_frames = 1;
  s.lumen.a_mm = 1.6;
  s.lumen.b_mm = 1.1;
  s.lumen.rotation_deg = 30;
  const auto ph = phantom::generate(s, 1);
  const auto q = quant::frame_quant(0, ph.truth.labels.frames[0], ph.pullback.calibration);
  const double area = std::numbers::pi * 1.6 * 1.1;
  EXPECT_NEAR(q.lumen_area_mm2, area, 0.005 * area);
  EXPECT_NEAR(q.lumen_diam_max_mm, 3.2, 0.02);
  EXPECT_NEAR(q.lumen_diam_min_mm, 2.2, 0.02);
}

TEST(FrameQuant, CalciumArcThicknessDepth) {
  Calibration cal;
  const int n = 360;
  auto f = disk_frame(n, 600, 200);
  for (int a = 10; a < 100; ++a)
    for (int r = 220; r < 320; ++r) f(a, r) = 2;
  f(50, 220) = 0;  // interior holes do not matter
  for (int r = 220; r < 320; ++r) f(55, r) = 0;  // single-A-line gap is bridged
  const auto q = quant::frame_quant(0, f, cal);
  EXPECT_DOUBLE_EQ(q.calc_angle_deg, 90);
  EXPECT_NEAR(*q.calc_max_thickness_mm, 0.5, 1e-12);
  EXPECT_NEAR(*q.calc_min_depth_mm, 0.1, 1e-12);
  expect_matches_oracle(f, cal, "constructed");
}

TEST(FrameQuant, GuidewireAlinesAreSkippedAndFlagged) {
  Calibration cal;
  auto f = disk_frame(64, 400, 100);
  for (int a = 0; a < 4; ++a)
    for (int r = 0; r < 400; ++r) f(a, r) = 5;
  f(2, 150) = 2;
  const auto q = quant::frame_quant(0, f, cal);
  EXPECT_TRUE(q.flags.guidewire_interpolated);
  EXPECT_FALSE(q.calc_max_thickness_mm.has_value());
}

TEST(Lesions, ScoreAndGrouping) {
  Calibration cal;
  std::vector<quant::FrameQuant> q(40);
  std::vector<bool> gate(40, false);
  for (int f = 0; f < 40; ++f) q[f].frame = f;
  for (int f = 3; f < 30; ++f) {
    gate[f] = true;
    q[f].calc_angle_deg = f == 10 ? 200 : 90;
    q[f].calc_max_thickness_mm = 0.6;
    q[f].calc_min_depth_mm = 0.2 - f * 0.001;
  }
  gate[35] = true;
  const auto l = quant::lesion_quant(q, gate, cal);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0].first_frame, 3);
  EXPECT_EQ(l[0].last_frame, 29);
  EXPECT_NEAR(l[0].length_mm, 27 * 0.2, 1e-12);
  EXPECT_EQ(l[0].calcium_score, 4);
  EXPECT_EQ(l[1].calcium_score, 0);
  EXPECT_FALSE(l[1].min_depth_mm.has_value());

  std::vector<oracle::FrameQuant> oq(40);
  for (int f = 0; f < 40; ++f) {
    oq[f].angle_deg = q[f].calc_angle_deg;
    oq[f].max_thick_mm = q[f].calc_max_thickness_mm;
    oq[f].min_depth_mm = q[f].calc_min_depth_mm;
  }
  const auto ol = oracle::lesions(oq, gate, cal);
  ASSERT_EQ(ol.size(), l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    EXPECT_EQ(ol[i].score, l[i].calcium_score);
    EXPECT_NEAR(ol[i].length_mm, l[i].length_mm, 1e-12);
  }
}

TEST(Lesions, ScoreBoundariesAreStrict) {
  EXPECT_EQ(quant::calcium_score(180, 5, 0.5), 0);
  EXPECT_EQ(quant::calcium_score(180.01, 5.01, 0.51), 4);
}

TEST(EnFace, BinsTakeMaxThicknessAndMinDepth) {
  Calibration cal;
  LabelVolume v(1, 8, 400);
  v.frames[0] = disk_frame(8, 400, 100);
  for (int r = 110; r < 130; ++r) v.frames[0](0, r) = 2;
  for (int r = 105; r < 110; ++r) v.frames[0](1, r) = 2;
  const auto m = quant::enface_maps(v, {}, cal, 4);
  EXPECT_EQ(m.presence(0, 0), 1);
  EXPECT_NEAR(m.thickness_mm(0, 0), 0.1, 1e-6);
  EXPECT_NEAR(m.depth_mm(0, 0), 0.025, 1e-6);
  EXPECT_EQ(m.presence(0, 1), 0);
  EXPECT_EQ(m.thickness_mm(0, 1), quant::kEnFaceAbsent);
}

TEST(Longitudinal, RowHoldsOppositeThenForwardAline) {
  auto pb = make_pullback("l", 2, 8, 300);
  pb.frames[1](0, 0) = 7;
  pb.frames[1](4, 0) = 9;
  const auto v = quant::longitudinal_view(pb, nullptr, 0);
  EXPECT_EQ(v.image(1, 300), 7);
  EXPECT_EQ(v.image(1, 299), 9);
  EXPECT_EQ(v.labels.size(), 0u);
}

// Frame table for a fixed phantom, checked against the oracle and then frozen.
TEST(GoldenCsv, FrozenFrameTable) {
  const auto ph = phantom::generate(small_spec(2024, 6, 128, 700, 0), 2024);
  std::vector<quant::FrameQuant> rows;
  for (int f = 0; f < 6; ++f) {
    rows.push_back(quant::frame_quant(f, ph.truth.labels.frames[f], ph.pullback.calibration));
    expect_matches_oracle(ph.truth.labels.frames[f], ph.pullback.calibration, "golden frame " + std::to_string(f));
  }
  const auto text = io::frame_csv(rows);
  const std::string path = std::string(OCTOPUS_TEST_DATA) + "/golden_quant.csv";
  if (std::getenv("OCTOPUS_REGEN_GOLDEN")) {
    std::ofstream(path) << text;
    GTEST_SKIP() << "golden file regenerated";
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing " << path;
  const std::string want((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, want);
}
