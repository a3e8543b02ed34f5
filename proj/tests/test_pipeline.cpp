#include <gtest/gtest.h>

#include <atomic>
#include <fstream>

#include "helpers.hpp"
#include "octopus/io.hpp"
#include "octopus/pipeline.hpp"

using namespace octopus;
using testing_helpers::small_spec;

namespace {

const phantom::Phantom& small_phantom() {
  static const phantom::Phantom ph = phantom::generate(small_spec(77, 12, 256, 700), 77);
  return ph;
}

}  // namespace

TEST(Pipeline, RoiRestrictsOutputs) {
  PipelineConfig cfg;
  cfg.roi = Roi{3, 8};
  std::vector<std::string> stages;
  const auto a = pipeline::run_pipeline(small_phantom().pullback, cfg, {},
                                        [&](const pipeline::ProgressEvent& e) {
                                          if (e.done == 0) stages.push_back(e.stage);
                                        });
  EXPECT_EQ(a.n_frames(), 6);
  EXPECT_EQ(a.labels.n_frames(), 6);
  ASSERT_EQ(a.frames.size(), 6u);
  EXPECT_EQ(a.frames.front().frame, 3);
  EXPECT_EQ(a.frames.back().frame, 8);
  EXPECT_EQ(stages, (std::vector<std::string>{"guidewire", "lumen", "plaque", "quant"}));
  for (const auto& l : a.lesions) {
    EXPECT_GE(l.first_frame, 3);
    EXPECT_LE(l.last_frame, 8);
  }
  cfg.roi = Roi{3, 12};
  EXPECT_THROW(pipeline::run_pipeline(small_phantom().pullback, cfg), ConfigError);
}

TEST(Pipeline, FailedFramesAreFlaggedNotFatal) {
  auto pb = small_phantom().pullback;
  pb.frames[5] = PolarFrame(pb.n_alines, pb.n_r, 0);
  const auto a = pipeline::run_pipeline(pb, PipelineConfig{});
  EXPECT_TRUE(a.frames[5].flags.segmentation_failed);
  EXPECT_FALSE(a.gate.gated[5]);
  EXPECT_EQ(a.frames[5].lumen_area_mm2, 0);
  EXPECT_FALSE(a.lumen[5].has_value());
  EXPECT_FALSE(a.frames[4].flags.segmentation_failed);
  bool warned = false;
  for (const auto& w : a.warnings) warned = warned || w.find("frame 5") != std::string::npos;
  EXPECT_TRUE(warned);
}

TEST(Pipeline, NoGuidewireIsAWarning) {
  phantom::CorpusOptions o;
  o.n_frames = 6;
  o.n_alines = 128;
  o.n_r = 700;
  o.guidewire = false;
  const auto ph = phantom::generate(phantom::random_spec(8, o), 8);
  const auto a = pipeline::run_pipeline(ph.pullback, PipelineConfig{});
  EXPECT_TRUE(a.guidewire.empty());
  ASSERT_FALSE(a.warnings.empty());
  EXPECT_NE(a.warnings[0].find("guidewire"), std::string::npos);
}

TEST(Pipeline, ArtifactsAreDeterministic) {
  const auto d1 = testing_helpers::temp_dir("det1"), d2 = testing_helpers::temp_dir("det2");
  PipelineConfig cfg;
  cfg.threads = 1;
  pipeline::write_artifacts(d1, pipeline::run_pipeline(small_phantom().pullback, cfg), cfg, 256);
  cfg.threads = 4;
  pipeline::write_artifacts(d2, pipeline::run_pipeline(small_phantom().pullback, cfg), cfg, 256);
  for (const char* f : {"labels.raw", "quant.csv", "lesions.csv", "enface_angle.png", "enface_thickness.png",
                        "enface_depth.png"})
    EXPECT_EQ(io::read_text(d1 / f), io::read_text(d2 / f)) << f;
  const auto summary = nlohmann::json::parse(io::read_text(d1 / "summary.json"));
  EXPECT_EQ(summary["roi"], nlohmann::json({0, 11}));
  EXPECT_TRUE(summary["timings_s"].contains("plaque"));
}

TEST(Pipeline, ExternalProbabilitiesDriveCalcium) {
  const auto& ph = small_phantom();
  std::vector<FloatImage> probs;
  for (const auto& f : ph.truth.labels.frames) {
    FloatImage p(f.rows(), f.cols(), 0.0f);
    for (std::size_t i = 0; i < f.size(); ++i) p.data()[i] = f.data()[i] == code(Label::calcium) ? 1.0f : 0.0f;
    probs.push_back(p);
  }
  const plaque::ExternalProbabilities ext(probs, "truth");
  const auto a = pipeline::run_pipeline(ph.pullback, PipelineConfig{}, {&ext, nullptr});
  int hit = 0, total = 0;
  for (int f = 0; f < 12; ++f) {
    if (!a.gate.gated[f]) continue;
    const auto& t = ph.truth.labels.frames[f].data();
    const auto& l = a.labels.frames[f].data();
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i] == code(Label::calcium)) {
        ++total;
        hit += l[i] == code(Label::calcium);
      }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(hit) / total, 0.9);
}

TEST(JobQueue, RunsInSubmissionOrder) {
  pipeline::JobQueue q;
  std::vector<int> order;
  std::mutex mu;
  std::vector<int> ids;
  for (int k = 0; k < 3; ++k)
    ids.push_back(q.submit("job" + std::to_string(k), [&, k](const pipeline::ProgressFn& p) {
      p({"work", 0, 1});
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      std::lock_guard lock(mu);
      order.push_back(k);
      p({"work", 1, 1});
    }, 1));
  const int bad = q.submit("bad", [](const pipeline::ProgressFn&) { throw InvalidArgument("boom"); });
  q.wait_all();
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(q.info(ids[2])->status, pipeline::JobStatus::done);
  EXPECT_DOUBLE_EQ(q.info(ids[2])->progress, 1.0);
  EXPECT_EQ(q.info(bad)->status, pipeline::JobStatus::failed);
  EXPECT_EQ(q.info(bad)->error, "boom");
  const auto log = q.log();
  EXPECT_EQ(log[0], "job 1 queued");
  const auto running2 = std::find(log.begin(), log.end(), "job 2 running");
  const auto done1 = std::find(log.begin(), log.end(), "job 1 done");
  EXPECT_LT(done1 - log.begin(), running2 - log.begin());
}
