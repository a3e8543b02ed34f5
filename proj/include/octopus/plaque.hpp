#pragma once

// Major-calcification frame gating and calcium segmentation.
//
// Segmenters work on the pixel-shifted, depth-cropped, Gaussian-filtered
// patch (lumen border at column 0). Any provider implementing
// CalciumSegmenter can stand in for the rule-based reference segmenter.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "octopus/core.hpp"
#include "octopus/morphology.hpp"
#include "octopus/preprocess.hpp"

namespace octopus::plaque {

class CalciumSegmenter {
 public:
  virtual ~CalciumSegmenter() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
  /// Per-pixel calcium probability in [0, 1], same shape as `patch`.
  /// `excluded` marks guidewire A-lines.
  virtual FloatImage segment(const FloatImage& patch, int frame, const preprocess::ShiftRecord& shift,
                             const std::vector<bool>& excluded) const = 0;
};

struct ReferenceOptions {
  double low_ratio = 0.5;         // intensity / tissue reference below this is signal-poor
  double full_low_ratio = 0.25;   // ... and fully signal-poor at or below this
  double border_contrast = 0.6;       // border peak minus interior (in reference units) scoring 0 ...
  double border_full_contrast = 0.9;  // ... and scoring 1
  int border_search_px = 4;
  int min_component_px = 20;
  int shallow_depth_px = 50;      // components starting shallower also test their abluminal border
  double shadow_ratio = 0.1;      // A-line mean below this fraction of the median is a shadow
};

/// Tissue reference per depth: 75th percentile across usable A-lines.
inline std::vector<double> depth_reference(const FloatImage& patch, const std::vector<bool>& usable) {
  const int n = patch.rows(), D = patch.cols();
  std::vector<double> ref(D, 0.0), col;
  col.reserve(n);
  for (int d = 0; d < D; ++d) {
    col.clear();
    for (int a = 0; a < n; ++a)
      if (usable[a]) col.push_back(patch(a, d));
    if (col.empty()) continue;
    const auto q = col.begin() + (col.size() * 3) / 4;
    std::nth_element(col.begin(), q, col.end());
    ref[d] = *q;
  }
  return ref;
}

/// Rule-based calcium probability: signal-poor evidence within a connected
/// candidate region times the sharpness of the region border.
inline FloatImage reference_segment(const FloatImage& patch, const std::vector<bool>& excluded = {},
                                    const ReferenceOptions& opt = {}) {
  const int n = patch.rows(), D = patch.cols();
  FloatImage prob(n, D, 0.0f);
  if (n == 0 || D == 0) return prob;

  std::vector<double> mean(n, 0.0);
  for (int a = 0; a < n; ++a) {
    auto row = patch.row(a);
    for (float v : row) mean[a] += v;
    mean[a] /= D;
  }
  std::vector<double> sorted(mean);
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double typical = sorted[n / 2];
  if (!(typical > 0)) return prob;
  std::vector<bool> usable(n);
  for (int a = 0; a < n; ++a)
    usable[a] = mean[a] >= opt.shadow_ratio * typical && (excluded.empty() || !excluded[a]);

  const auto ref = depth_reference(patch, usable);
  FloatImage ratio(n, D, 0.0f);
  morph::Mask cand(n, D, 0);
  for (int a = 0; a < n; ++a) {
    if (!usable[a]) continue;
    for (int d = 0; d < D; ++d) {
      if (!(ref[d] > 0)) continue;
      const double q = patch(a, d) / ref[d];
      ratio(a, d) = static_cast<float>(q);
      if (q < opt.low_ratio) cand(a, d) = 1;
    }
  }
  const auto cc = morph::connected_components(cand, false, true);
  const int m = cc.count();
  // Inner and outer edge depth per (component, A-line).
  std::vector<std::vector<std::pair<int, int>>> span(m);
  {
    for (int a = 0; a < n; ++a) {
      int d = 0;
      while (d < D) {
        const int id = cc.labels(a, d);
        if (id < 0) {
          ++d;
          continue;
        }
        int e = d;
        while (e + 1 < D && cc.labels(a, e + 1) == id) ++e;
        span[id].push_back({a, d});
        span[id].push_back({a, -(e + 1)});  // negative marks the outer edge
        d = e + 1;
      }
    }
  }
  // Sharpness of a border: brightest sample in [from, to) against the mean of
  // the region samples in [in_from, in_to).
  auto border_score = [&](int a, int from, int to, int in_from, int in_to) {
    double peak = 0, inside = 0;
    int k = 0;
    for (int d = std::max(0, from); d < std::min(D, to); ++d) peak = std::max(peak, static_cast<double>(ratio(a, d)));
    for (int d = std::max(0, in_from); d < std::min(D, in_to); ++d, ++k) inside += ratio(a, d);
    if (k == 0) return 0.0;
    const double contrast = peak - inside / k;
    return std::clamp((contrast - opt.border_contrast) / (opt.border_full_contrast - opt.border_contrast), 0.0, 1.0);
  };
  std::vector<double> evidence(m, 0.0);
  for (int id = 0; id < m; ++id) {
    if (cc.sizes[id] < opt.min_component_px) continue;
    double lead = 0, trail = 0;
    int lead_n = 0, trail_n = 0, shallowest = D;
    for (auto [a, d] : span[id]) {
      if (d >= 0) {
        shallowest = std::min(shallowest, d);
        lead += border_score(a, d - opt.border_search_px, d, d, d + 3);
        ++lead_n;
      } else {
        const int e = -d;
        trail += border_score(a, e, e + opt.border_search_px, e - 3, e);
        ++trail_n;
      }
    }
    lead = lead_n ? lead / lead_n : 0;
    trail = trail_n ? trail / trail_n : 0;
    evidence[id] = shallowest < opt.shallow_depth_px ? std::max(lead, trail) : lead;
  }
  for (int a = 0; a < n; ++a)
    for (int d = 0; d < D; ++d) {
      const int id = cc.labels(a, d);
      if (id < 0 || evidence[id] <= 0) continue;
      const double low = std::clamp((opt.low_ratio - ratio(a, d)) / (opt.low_ratio - opt.full_low_ratio), 0.0, 1.0);
      prob(a, d) = static_cast<float>(low * evidence[id]);
    }
  return prob;
}

class ReferenceSegmenter final : public CalciumSegmenter {
 public:
  explicit ReferenceSegmenter(ReferenceOptions opt = {}) : opt_(opt) {}
  std::string name() const override { return "reference-rule"; }
  std::string version() const override { return "1"; }
  FloatImage segment(const FloatImage& patch, int, const preprocess::ShiftRecord&,
                     const std::vector<bool>& excluded) const override {
    return reference_segment(patch, excluded, opt_);
  }

 private:
  ReferenceOptions opt_;
};

/// Probabilities produced elsewhere, stored in unshifted pullback coordinates
/// (the probs.raw layout); shifted and cropped on demand.
class ExternalProbabilities final : public CalciumSegmenter {
 public:
  ExternalProbabilities(std::vector<FloatImage> volume, std::string provider)
      : volume_(std::move(volume)), provider_(std::move(provider)) {}
  std::string name() const override { return provider_; }
  std::string version() const override { return "external"; }
  FloatImage segment(const FloatImage& patch, int frame, const preprocess::ShiftRecord& shift,
                     const std::vector<bool>&) const override {
    if (frame < 0 || frame >= static_cast<int>(volume_.size()))
      throw InvalidArgument("no external probabilities for frame " + std::to_string(frame));
    auto shifted = crop_depth(preprocess::pixel_shift(volume_[frame], shift), patch.cols());
    for (auto& v : shifted.data()) v = std::clamp(v, 0.0f, 1.0f);
    return shifted;
  }

 private:
  std::vector<FloatImage> volume_;
  std::string provider_;
};

// ---------------------------------------------------------------------------
// Frame gate
// ---------------------------------------------------------------------------

struct FrameGate {
  std::vector<bool> gated;
  std::vector<double> score;
};

/// Fraction of A-lines whose probability exceeds `pixel_threshold` anywhere.
inline double gate_score(const FloatImage& prob, double pixel_threshold = 0.5) {
  if (prob.rows() == 0) return 0;
  int hits = 0;
  for (int a = 0; a < prob.rows(); ++a) {
    auto row = prob.row(a);
    if (std::any_of(row.begin(), row.end(), [&](float v) { return v > pixel_threshold; })) ++hits;
  }
  return static_cast<double>(hits) / prob.rows();
}

inline std::vector<bool> threshold_scores(const std::vector<double>& scores, double threshold) {
  std::vector<bool> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold;
  return out;
}

/// Threshold, then 1-D opening and closing (length `kernel`) along the frame axis.
inline FrameGate gate_frames(const std::vector<double>& scores, double threshold, int kernel = 3) {
  for (double s : scores)
    if (!(s >= 0 && s <= 1)) throw InvalidArgument("gate scores must lie in [0, 1]");
  FrameGate g;
  g.score = scores;
  g.gated = morph::close1d(morph::open1d(threshold_scores(scores, threshold), kernel), kernel);
  return g;
}

// ---------------------------------------------------------------------------
// Label post-processing
// ---------------------------------------------------------------------------

/// Thresholded probability with island removal, in the shifted domain.
inline morph::Mask calcium_mask(const FloatImage& prob, double threshold, int opening_radius = 2) {
  morph::Mask m(prob.rows(), prob.cols(), 0);
  for (std::size_t i = 0; i < prob.size(); ++i) m.data()[i] = prob.data()[i] >= threshold ? 1 : 0;
  if (opening_radius > 0) m = morph::open(m, morph::disk(opening_radius), true);
  return m;
}

/// Writes calcium into `labels` for one frame: mask mapped back through the
/// shift record, only over background pixels.
inline void apply_calcium(LabelFrame& labels, const morph::Mask& shifted_mask, const preprocess::ShiftRecord& rec) {
  const auto mask = preprocess::unshift(shifted_mask, rec, labels.cols());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.data()[i] && labels.data()[i] == code(Label::background)) labels.data()[i] = code(Label::calcium);
}

/// Calcium layer for a pullback: only gated frames receive calcium.
inline void postprocess_labels(LabelVolume& labels, const std::vector<FloatImage>& probs, const FrameGate& gate,
                               const std::vector<preprocess::ShiftRecord>& shifts, double threshold,
                               int opening_radius = 2) {
  for (int f = 0; f < labels.n_frames(); ++f) {
    if (f >= static_cast<int>(gate.gated.size()) || !gate.gated[f]) continue;
    apply_calcium(labels.frames[f], calcium_mask(probs[f], threshold, opening_radius), shifts[f]);
  }
}

}  // namespace octopus::plaque
