#include <gtest/gtest.h>

#include <random>

#include "octopus/ml.hpp"

using namespace octopus;

namespace {

ml::Dataset blobs(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  ml::Dataset d;
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    d.add({g(rng) + 3 * y, g(rng) - 2 * y, g(rng)}, y);
  }
  return d;
}

}  // namespace

TEST(Trees, SeparableDataIsLearned) {
  const auto d = blobs(1, 400);
  const auto m = ml::train(d, ml::ModelKind::strut_detector, 3);
  EXPECT_GE(ml::accuracy(m, blobs(2, 400)), 0.9);
}

TEST(Svm, SeparableDataIsLearned) {
  const auto d = blobs(3, 400);
  const auto m = ml::train(d, ml::ModelKind::coverage_classifier, 3);
  EXPECT_GE(ml::accuracy(m, blobs(4, 400)), 0.9);
  for (double s : {m.score(d.x[0]), m.score(d.x[1])}) {
    EXPECT_GE(s, 0);
    EXPECT_LE(s, 1);
  }
}

TEST(Training, IsDeterministicInSeed) {
  const auto d = blobs(5, 200);
  EXPECT_EQ(ml::serialize(ml::train(d, ml::ModelKind::strut_detector, 8)),
            ml::serialize(ml::train(d, ml::ModelKind::strut_detector, 8)));
  EXPECT_EQ(ml::serialize(ml::train(d, ml::ModelKind::coverage_classifier, 8)),
            ml::serialize(ml::train(d, ml::ModelKind::coverage_classifier, 8)));
}

TEST(Training, SingleClassIsDegenerate) {
  ml::Dataset d;
  for (int i = 0; i < 10; ++i) d.add({double(i)}, 1);
  EXPECT_THROW(ml::train(d, ml::ModelKind::strut_detector, 1), DegenerateTraining);
}

TEST(Scoring, FeatureCountIsChecked) {
  const auto m = ml::train(blobs(6, 100), ml::ModelKind::strut_detector, 1);
  EXPECT_THROW(m.score({1.0}), InvalidArgument);
}

TEST(Serialization, SvmRoundTripAndKindCheck) {
  const auto d = blobs(7, 100);
  const auto m = ml::train(d, ml::ModelKind::coverage_classifier, 2);
  const auto back = ml::deserialize(ml::serialize(m));
  EXPECT_EQ(back.kind, ml::ModelKind::coverage_classifier);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_DOUBLE_EQ(back.score(d.x[i]), m.score(d.x[i]));
  EXPECT_THROW(back.require(ml::ModelKind::strut_detector), ModelKindMismatch);
}
