#pragma once

// Strut classifiers trained on reproducible phantom corpora (spec + seed).

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "octopus/ml.hpp"
#include "octopus/phantom.hpp"
#include "octopus/preprocess.hpp"
#include "octopus/stent.hpp"

namespace octopus::training {

struct MatchTolerance {
  int alines = 1;
  double radius_px = 2;
};

/// Greedy one-to-one assignment of candidates to true struts of the same
/// frame. Returns, per candidate, the index into `truth` or -1.
template <typename Item>
std::vector<int> match_struts(const std::vector<Item>& found, const std::vector<phantom::StrutTruth>& truth,
                              int n_alines, const MatchTolerance& tol = {}) {
  struct Pair {
    double cost;
    int i, j;
  };
  std::vector<Pair> pairs;
  for (int i = 0; i < static_cast<int>(found.size()); ++i)
    for (int j = 0; j < static_cast<int>(truth.size()); ++j) {
      if (found[i].frame != truth[j].frame) continue;
      int da = std::abs(found[i].aline - truth[j].aline) % n_alines;
      da = std::min(da, n_alines - da);
      const double dr = std::abs(found[i].center_px - truth[j].center_px);
      if (da <= tol.alines && dr <= tol.radius_px) pairs.push_back({da + dr, i, j});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.cost < y.cost; });
  std::vector<int> out(found.size(), -1);
  std::vector<bool> used(truth.size(), false);
  for (const auto& p : pairs)
    if (out[p.i] < 0 && !used[p.j]) {
      out[p.i] = p.j;
      used[p.j] = true;
    }
  return out;
}

/// Automated lumen and guidewire results for a phantom, as the pipeline
/// would compute them.
struct Preprocessed {
  preprocess::GuidewireBand band;
  std::vector<std::optional<Contour>> lumen;
};

inline Preprocessed preprocess_pullback(const Pullback& pb) {
  Preprocessed p;
  try {
    p.band = preprocess::detect_guidewire(preprocess::accumulate_intensity(pb));
  } catch (const NoShadowFound&) {
    p.band.frames.assign(pb.n_frames(), std::nullopt);
  }
  const auto lum = preprocess::segment_lumen_dp(pb, p.band);
  p.lumen.resize(pb.n_frames());
  for (int f = 0; f < pb.n_frames(); ++f)
    if (!lum[f].failed) p.lumen[f] = lum[f].contour;
  return p;
}

struct StrutSets {
  ml::Dataset detector;
  ml::Dataset coverage;
};

/// Candidates labelled against phantom truth: detector label = matches a
/// true strut; coverage label = the matched strut is covered.
inline void add_phantom(StrutSets& sets, const phantom::Phantom& ph, const stent::StrutOptions& opt = {},
                        const MatchTolerance& tol = {2, 3}) {
  const auto& pb = ph.pullback;
  const auto pre = preprocess_pullback(pb);
  const double mm = pb.calibration.r_pixel_mm();
  for (int f = 0; f < pb.n_frames(); ++f) {
    if (!pre.lumen[f]) continue;
    const auto& lumen = *pre.lumen[f];
    const auto ctx = stent::frame_context(pb.frames[f], lumen, pre.band.mask(f, pb.n_alines), opt.detect);
    const auto cands = stent::detect_candidates(pb.frames[f], lumen, ctx, f, opt.detect);
    std::vector<phantom::StrutTruth> truth;
    for (const auto& t : ph.truth.struts)
      if (t.frame == f) truth.push_back(t);
    const auto m = match_struts(cands, truth, pb.n_alines, tol);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      sets.detector.add(stent::detector_features(cands[i], pb.frames[f], lumen, ctx, mm, opt.detect), m[i] >= 0);
      if (m[i] >= 0)
        sets.coverage.add(stent::coverage_features(cands[i], pb.frames[f], lumen, ctx, mm), truth[m[i]].covered);
    }
  }
}

struct CorpusSpec {
  std::vector<std::uint64_t> seeds = {7001, 7002, 7003, 7004};
  phantom::CorpusOptions options = [] {
    phantom::CorpusOptions o;
    o.n_frames = 24;
    o.stent = true;
    o.max_lesions = 2;
    return o;
  }();
  std::uint64_t train_seed = 11;
};

inline StrutSets build_sets(const CorpusSpec& spec, const stent::StrutOptions& opt = {}) {
  StrutSets sets;
  for (auto seed : spec.seeds) add_phantom(sets, phantom::generate(phantom::random_spec(seed, spec.options), seed), opt);
  return sets;
}

inline nlohmann::json corpus_json(const CorpusSpec& spec) {
  return {{"seeds", spec.seeds},
          {"n_frames", spec.options.n_frames},
          {"noise", spec.options.noise},
          {"struts_per_frame", spec.options.struts_per_frame},
          {"max_lesions", spec.options.max_lesions}};
}

inline stent::StentModels train_models(const CorpusSpec& spec, const stent::StrutOptions& opt = {}) {
  const auto sets = build_sets(spec, opt);
  stent::StentModels m{ml::train(sets.detector, ml::ModelKind::strut_detector, spec.train_seed),
                       ml::train(sets.coverage, ml::ModelKind::coverage_classifier, spec.train_seed)};
  m.detector.meta["corpus"] = corpus_json(spec);
  m.coverage.meta["corpus"] = corpus_json(spec);
  return m;
}

/// Models trained once per process from the default corpus.
inline const stent::StentModels& default_models() {
  static std::once_flag once;
  static stent::StentModels models;
  std::call_once(once, [] { models = train_models(CorpusSpec{}); });
  return models;
}

}  // namespace octopus::training
