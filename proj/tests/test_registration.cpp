#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "octopus/phantom.hpp"
#include "octopus/registration.hpp"

using namespace octopus;
using registration::ThicknessSignal;

namespace {

std::vector<double> bumpy(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(n, 0.0);
  for (int i = 0; i < n; ++i) v[i] = u(rng) < 0.3 ? u(rng) : 0.0;
  return v;
}

}  // namespace

TEST(ThicknessSignal, LongestCalciumRunPerFrame) {
  LabelVolume v(2, 4, 320);
  for (int r = 10; r < 20; ++r) v.frames[1](2, r) = 2;
  for (int r = 30; r < 35; ++r) v.frames[1](3, r) = 2;
  const auto s = registration::thickness_signal(v, Calibration{});
  EXPECT_DOUBLE_EQ(s.mm[0], 0);
  EXPECT_DOUBLE_EQ(s.mm[1], 0.05);
}

TEST(AutoRegistration, RecoversKnownOffset) {
  const auto base = bumpy(3, 200);
  for (int k : {-30, -7, 0, 12, 40}) {
    std::vector<double> flt(150, 0.0);
    for (int f = 0; f < 150; ++f)
      if (f + k + 20 >= 0 && f + k + 20 < 200) flt[f] = base[f + k + 20];
    const auto r = registration::register_auto(ThicknessSignal{"r", base}, ThicknessSignal{"f", flt});
    EXPECT_EQ(r.offset, k + 20);
    EXPECT_NEAR(*r.peak_correlation, 1.0, 1e-9);
  }
}

TEST(AutoRegistration, PeakMatchesBruteForceCorrelation) {
  const auto ref = bumpy(10, 90), flt = bumpy(11, 80);
  const auto r = registration::register_auto(ThicknessSignal{"r", ref}, ThicknessSignal{"f", flt});
  double best = -2;
  for (int o = -40; o <= 40; ++o)
    if (auto c = oracle::correlation(ref, flt, o, 25)) best = std::max(best, *c);
  EXPECT_NEAR(*r.peak_correlation, best, 1e-9);
  EXPECT_NEAR(*oracle::correlation(ref, flt, r.offset, 25), best, 1e-9);
}

TEST(AutoRegistration, ConstantSignalIsDegenerate) {
  EXPECT_THROW(registration::register_auto(ThicknessSignal{"r", std::vector<double>(50, 0.0)},
                                           ThicknessSignal{"f", bumpy(1, 50)}),
               DegenerateSignal);
}

TEST(LandmarkRegistration, MeanOffsetAndWarnings) {
  const auto r = registration::register_landmark({110, 150}, {100, 140}, 300, 300);
  EXPECT_EQ(r.offset, 10);
  EXPECT_TRUE(r.warnings.empty());
  const auto odd = registration::register_landmark({110, 150}, {100, 141});
  EXPECT_EQ(odd.offset, 10);  // 9.5 rounds away from zero
  EXPECT_EQ(odd.warnings.size(), 1u);
  const auto neg = registration::register_landmark({100, 140}, {110, 151});
  EXPECT_EQ(neg.offset, -11);  // -10.5
  const auto far = registration::register_landmark({100, 140}, {100, 151});
  EXPECT_EQ(far.warnings.size(), 2u);
}

TEST(LandmarkRegistration, InvalidPairsRejected) {
  EXPECT_THROW(registration::register_landmark({10, 10}, {1, 2}), InvalidLandmarks);
  EXPECT_THROW(registration::register_landmark({10, 20}, {5, 2}), InvalidLandmarks);
  EXPECT_THROW(registration::register_landmark({10, 20}, {1, 400}, 300, 300), InvalidLandmarks);
}

TEST(ApplyRegistration, PureReindexing) {
  registration::RegistrationResult r;
  r.offset = 2;
  const auto out = registration::apply_registration(std::vector<int>{7, 8, 9}, r, 4);
  EXPECT_FALSE(out[0].has_value());
  EXPECT_EQ(*out[2], 7);
  EXPECT_EQ(*out[3], 8);
}

TEST(Registration, FrameShiftedPhantomGivesShiftAsOffset) {
  phantom::PhantomSpec spec = testing_helpers::small_spec(5, 60, 128, 700, 0);
  spec.calcium = {{8, 14, 40, 120, 0.1, 0.6}, {22, 25, 200, 90, 0.1, 0.3}, {34, 44, 300, 150, 0.15, 0.8}};
  const auto ph = phantom::generate(spec, 5);
  const auto& cal = ph.pullback.calibration;
  for (int k : {-6, 0, 7}) {
    const auto ref = registration::thickness_signal(phantom::shift_frames(ph.truth.labels, k), cal);
    const auto flt = registration::thickness_signal(ph.truth.labels, cal);
    EXPECT_EQ(registration::register_auto(ref, flt, {12, 25}).offset, k);
  }
}
