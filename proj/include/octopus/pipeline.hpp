#pragma once

// End-to-end analysis of one pullback and the sequential job queue.
//
// Stages: guidewire, lumen, plaque (gate + calcium), stent (stent mode
// only), quant, export. A frame whose lumen cannot be segmented is flagged
// and skipped by later stages; the pullback itself never aborts on it.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "octopus/config.hpp"
#include "octopus/io.hpp"
#include "octopus/ml.hpp"
#include "octopus/parallel.hpp"
#include "octopus/plaque.hpp"
#include "octopus/png.hpp"
#include "octopus/preprocess.hpp"
#include "octopus/quant.hpp"
#include "octopus/stent.hpp"
#include "octopus/training.hpp"

namespace octopus::pipeline {

struct ProgressEvent {
  std::string stage;
  int done = 0;
  int total = 0;
};
using ProgressFn = std::function<void(const ProgressEvent&)>;

struct StageTiming {
  std::string stage;
  double seconds = 0;
};

struct Artifacts {
  int first_frame = 0;  // ROI, inclusive; per-frame vectors are indexed from first_frame
  int last_frame = -1;
  Mode mode = Mode::baseline;
  LabelVolume labels;
  std::vector<std::optional<Contour>> lumen;
  preprocess::GuidewireBand guidewire;
  plaque::FrameGate gate;
  std::vector<quant::FrameQuant> frames;
  std::vector<quant::LesionQuant> lesions;
  std::vector<stent::StrutRecord> struts;
  std::optional<stent::StentReport> stent_report;
  quant::EnFaceMaps enface;
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;

  int n_frames() const noexcept { return last_frame - first_frame + 1; }
  double total_seconds() const {
    double s = 0;
    for (const auto& t : timings) s += t.seconds;
    return s;
  }
};

struct Inputs {
  const plaque::CalciumSegmenter* segmenter = nullptr;  // null: reference segmenter
  const stent::StentModels* models = nullptr;           // null: config paths, else default corpus
};

inline Roi resolve_roi(const PipelineConfig& cfg, int n_frames) {
  if (n_frames <= 0) throw InvalidArgument("pullback has no frames");
  if (!cfg.roi) return {0, n_frames - 1};
  if (cfg.roi->last >= n_frames)
    throw ConfigError("roi: last frame " + std::to_string(cfg.roi->last) + " beyond pullback of " +
                      std::to_string(n_frames) + " frames");
  return *cfg.roi;
}

inline stent::StentModels load_models(const PipelineConfig& cfg) {
  if (cfg.detector_model.empty() != cfg.coverage_model.empty())
    throw ConfigError("stent: give both detector_model and coverage_model, or neither");
  if (cfg.detector_model.empty()) return training::default_models();
  stent::StentModels m{ml::load(cfg.detector_model), ml::load(cfg.coverage_model)};
  m.detector.require(ml::ModelKind::strut_detector);
  m.coverage.require(ml::ModelKind::coverage_classifier);
  return m;
}

namespace detail {

class StageClock {
 public:
  StageClock(Artifacts& a, const ProgressFn& p) : a_(a), p_(p) {}
  template <typename Fn>
  void run(const std::string& stage, int total, Fn&& fn) {
    if (p_) p_({stage, 0, total});
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    a_.timings.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    if (p_) p_({stage, total, total});
  }

 private:
  Artifacts& a_;
  const ProgressFn& p_;
};

inline Pullback slice(const Pullback& pb, const Roi& roi) {
  if (roi.first == 0 && roi.last == pb.n_frames() - 1) return pb;
  Pullback out;
  out.id = pb.id;
  out.calibration = pb.calibration;
  out.n_alines = pb.n_alines;
  out.n_r = pb.n_r;
  out.frames.assign(pb.frames.begin() + roi.first, pb.frames.begin() + roi.last + 1);
  return out;
}

}  // namespace detail

inline Artifacts run_pipeline(const Pullback& full, const PipelineConfig& cfg, const Inputs& in = {},
                              const ProgressFn& progress = {}) {
  full.validate();
  const Roi roi = resolve_roi(cfg, full.n_frames());
  const Pullback pb = detail::slice(full, roi);
  const int nf = pb.n_frames(), n = pb.n_alines, n_r = pb.n_r;
  const unsigned saved_limit = thread_limit().load();
  thread_limit() = static_cast<unsigned>(cfg.threads);
  struct Restore {
    unsigned v;
    ~Restore() { thread_limit() = v; }
  } restore{saved_limit};

  Artifacts art;
  art.first_frame = roi.first;
  art.last_frame = roi.last;
  art.mode = cfg.mode;
  detail::StageClock clock(art, progress);

  clock.run("guidewire", nf, [&] {
    try {
      art.guidewire = preprocess::detect_guidewire(preprocess::accumulate_intensity(pb), cfg.guidewire);
    } catch (const NoShadowFound& e) {
      art.guidewire.frames.assign(nf, std::nullopt);
      art.warnings.push_back(std::string("guidewire: ") + e.what());
    }
  });

  std::vector<preprocess::LumenResult> lumen;
  clock.run("lumen", nf, [&] {
    lumen = preprocess::segment_lumen_dp(pb, art.guidewire, cfg.lumen);
    art.lumen.resize(nf);
    art.labels = LabelVolume(nf, n, n_r);
    for (int f = 0; f < nf; ++f) {
      const auto gw = art.guidewire.mask(f, n);
      if (lumen[f].failed) {
        art.warnings.push_back("lumen: segmentation failed on frame " + std::to_string(roi.first + f));
        for (int a = 0; a < n; ++a)
          if (gw[a]) std::fill(art.labels.frames[f].row(a).begin(), art.labels.frames[f].row(a).end(),
                               code(Label::guidewire));
        continue;
      }
      art.lumen[f] = lumen[f].contour;
      art.labels.frames[f] = preprocess::lumen_labels(lumen[f].contour, n_r, gw);
    }
  });

  clock.run("plaque", nf, [&] {
    const plaque::ReferenceSegmenter reference(cfg.reference);
    const plaque::CalciumSegmenter& seg = in.segmenter ? *in.segmenter : reference;
    std::vector<FloatImage> probs(nf);
    std::vector<preprocess::ShiftRecord> shifts(nf);
    std::vector<double> scores(nf, 0.0);
    parallel_for(nf, [&](int f) {
      if (!art.lumen[f]) {
        shifts[f].shifts.assign(n, 0);
        probs[f] = FloatImage(n, cfg.crop_depth_px, 0.0f);
        return;
      }
      shifts[f] = preprocess::shift_record(*art.lumen[f], n_r);
      const auto patch = preprocess::model_patch(pb.frames[f], shifts[f], cfg.crop_depth_px, cfg.patch_sigma);
      probs[f] = seg.segment(patch, roi.first + f, shifts[f], art.guidewire.mask(f, n));
      scores[f] = plaque::gate_score(probs[f], cfg.gate_pixel_threshold);
    });
    art.gate = plaque::gate_frames(scores, cfg.gate_threshold, cfg.gate_kernel);
    for (int f = 0; f < nf; ++f)
      if (!art.lumen[f]) art.gate.gated[f] = false;
    plaque::postprocess_labels(art.labels, probs, art.gate, shifts, cfg.calcium_threshold,
                               cfg.calcium_opening_radius);
  });

  if (cfg.mode == Mode::stent_analysis) {
    clock.run("stent", nf, [&] {
      const stent::StentModels owned = in.models ? stent::StentModels{} : load_models(cfg);
      const auto& models = in.models ? *in.models : owned;
      art.struts = stent::analyze_pullback(pb, art.lumen, art.guidewire, models, 0, nf - 1, cfg.stent);
      for (auto& s : art.struts) s.frame += roi.first;
      art.stent_report = stent::summarize_stent(art.struts, pb.calibration.frame_spacing_mm);
    });
  }

  clock.run("quant", nf, [&] {
    art.frames.resize(nf);
    parallel_for(nf, [&](int f) {
      auto q = quant::frame_quant(roi.first + f, art.labels.frames[f], pb.calibration);
      q.gated = art.gate.gated[f];
      q.flags.segmentation_failed = lumen[f].failed;
      if (lumen[f].failed) {
        q.lumen_area_mm2 = q.lumen_diam_max_mm = q.lumen_diam_min_mm = q.lumen_diam_mean_mm = 0;
      }
      art.frames[f] = q;
    });
    art.lesions = quant::lesion_quant(art.frames, art.gate.gated, pb.calibration, cfg.score);
    std::vector<Contour> contours(nf);
    for (int f = 0; f < nf; ++f) contours[f] = quant::contour_from_labels(art.labels.frames[f]);
    art.enface = quant::enface_maps(art.labels, contours, pb.calibration, cfg.enface_bins);
  });
  return art;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Presence as 0/255; thickness and depth scaled so 1.5 mm maps to 255.
inline Image<std::uint8_t> enface_image(const quant::EnFaceMaps& m, const std::string& which) {
  const int rows = m.presence.rows(), cols = m.presence.cols();
  Image<std::uint8_t> out(rows, cols, 0);
  for (int f = 0; f < rows; ++f)
    for (int b = 0; b < cols; ++b) {
      if (!m.presence(f, b)) continue;
      if (which == "angle") {
        out(f, b) = 255;
      } else {
        const float v = which == "thickness" ? m.thickness_mm(f, b) : m.depth_mm(f, b);
        out(f, b) = static_cast<std::uint8_t>(std::clamp(std::lround(v / 1.5 * 254.0) + 1, 1L, 255L));
      }
    }
  return out;
}

inline nlohmann::json summary_json(const Artifacts& a, const PipelineConfig& cfg) {
  nlohmann::json j;
  j["roi"] = {a.first_frame, a.last_frame};
  j["mode"] = mode_name(a.mode);
  j["config"] = to_json(cfg);
  j["warnings"] = a.warnings;
  nlohmann::json t = nlohmann::json::object();
  for (const auto& s : a.timings) t[s.stage] = s.seconds;
  j["timings_s"] = t;
  j["seconds_per_frame"] = a.n_frames() > 0 ? a.total_seconds() / a.n_frames() : 0.0;
  nlohmann::json gw = nlohmann::json::array();
  for (const auto& b : a.guidewire.frames)
    gw.push_back(b ? nlohmann::json{b->lower, b->upper} : nlohmann::json(nullptr));
  j["guidewire"] = gw;
  if (a.stent_report) {
    const auto& r = *a.stent_report;
    j["stent"] = {{"struts", r.struts},
                  {"covered", r.covered},
                  {"uncovered", r.uncovered},
                  {"malapposed", r.malapposed},
                  {"percent_covered", r.percent_covered},
                  {"mean_coverage_um", r.mean_coverage_um},
                  {"mean_malapposition_um", r.mean_malapposition_um},
                  {"max_malapposition_um", r.max_malapposition_um},
                  {"malapposed_length_mm", r.malapposed_length_mm},
                  {"uncovered_length_mm", r.uncovered_length_mm}};
  }
  return j;
}

/// labels.raw (ROI frames), quant.csv, lesions.csv, stent.csv (stent mode),
/// en face PNGs and summary.json. Everything except summary.json is a pure
/// function of the inputs.
inline void write_artifacts(const std::filesystem::path& dir, const Artifacts& a, const PipelineConfig& cfg,
                            int n_alines) {
  std::filesystem::create_directories(dir);
  io::save_labels(dir / "labels.raw", a.labels);
  io::write_text(dir / "quant.csv", io::frame_csv(a.frames));
  io::write_text(dir / "lesions.csv", io::lesion_csv(a.lesions));
  if (a.stent_report) io::write_text(dir / "stent.csv", io::stent_csv(a.struts, n_alines));
  for (const char* m : {"angle", "thickness", "depth"})
    io::write_text(dir / (std::string("enface_") + m + ".png"), png::encode_gray(enface_image(a.enface, m)));
  io::write_text(dir / "summary.json", summary_json(a, cfg).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Job queue
// ---------------------------------------------------------------------------

enum class JobStatus { queued, running, done, failed };

inline const char* status_name(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "queued";
}

struct JobInfo {
  int id = 0;
  std::string name;
  JobStatus status = JobStatus::queued;
  std::string stage;
  double progress = 0;  // fraction of stages finished
  std::string error;
};

/// Runs jobs one at a time in submission order on a background thread.
class JobQueue {
 public:
  using Task = std::function<void(const ProgressFn&)>;

  JobQueue() : worker_([this] { loop(); }) {}
  ~JobQueue() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  int submit(std::string name, Task task, int n_stages = 6) {
    std::lock_guard lock(mu_);
    const int id = next_id_++;
    jobs_[id] = {id, std::move(name), JobStatus::queued, "", 0, ""};
    stages_[id] = std::max(1, n_stages);
    pending_.push_back({id, std::move(task)});
    log_.push_back("job " + std::to_string(id) + " queued");
    cv_.notify_all();
    return id;
  }

  std::optional<JobInfo> info(int id) const {
    std::lock_guard lock(mu_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  bool busy() const {
    std::lock_guard lock(mu_);
    return running_ || !pending_.empty();
  }

  void wait(int id) {
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [&] {
      const auto it = jobs_.find(id);
      return it == jobs_.end() || it->second.status == JobStatus::done || it->second.status == JobStatus::failed;
    });
  }

  void wait_all() {
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [&] { return pending_.empty() && !running_; });
  }

 private:
  void loop() {
    for (;;) {
      std::pair<int, Task> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || !pending_.empty(); });
        if (stop_ && pending_.empty()) return;
        job = std::move(pending_.front());
        pending_.pop_front();
        running_ = true;
        jobs_[job.first].status = JobStatus::running;
        log_.push_back("job " + std::to_string(job.first) + " running");
      }
      const int id = job.first;
      int finished = 0;
      auto progress = [&](const ProgressEvent& e) {
        std::lock_guard lock(mu_);
        auto& j = jobs_[id];
        j.stage = e.stage;
        if (e.done == e.total) ++finished;
        j.progress = std::min(1.0, static_cast<double>(finished) / stages_[id]);
      };
      std::string error;
      try {
        job.second(progress);
      } catch (const std::exception& e) {
        error = e.what();
      }
      {
        std::lock_guard lock(mu_);
        auto& j = jobs_[id];
        j.status = error.empty() ? JobStatus::done : JobStatus::failed;
        j.error = error;
        if (error.empty()) j.progress = 1.0;
        log_.push_back("job " + std::to_string(id) + " " + status_name(j.status));
        running_ = false;
      }
      done_cv_.notify_all();
    }
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::map<int, JobInfo> jobs_;
  std::map<int, int> stages_;
  std::deque<std::pair<int, Task>> pending_;
  std::vector<std::string> log_;
  int next_id_ = 1;
  bool running_ = false;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace octopus::pipeline
