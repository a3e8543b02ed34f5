#pragma once

// Stent analysis: strut candidates (bright bloom followed by a dark shadow),
// feature extraction, detector and coverage classification, stent contour,
// coverage thickness and malapposition.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "octopus/core.hpp"
#include "octopus/ml.hpp"
#include "octopus/parallel.hpp"
#include "octopus/preprocess.hpp"

namespace octopus::stent {

inline constexpr int kDetectorFeatures = 12;
inline constexpr int kCoverageFeatures = 21;

struct DetectOptions {
  int inward_px = 120;        // search towards the catheter from the lumen contour
  int outward_px = 80;        // and into the wall
  int bloom_px = 5;           // matched box length
  double peak_ratio = 2.0;    // box mean / surface tissue reference
  double shadow_ratio = 0.35; // shadow mean / tissue mean at the same depths
  int shadow_gap_px = 3;
  int shadow_px = 40;
  int surface_px = 20;
  int profile_px = 400;
};

struct StrutOptions {
  DetectOptions detect;
  double strut_thickness_um = 80;
  double malapposition_threshold_um = 20;
  double detector_threshold = 0.5;
};

struct Candidate {
  int frame = 0;
  int aline = 0;          // nearest A-line to the angular centroid
  double aline_pos = 0;   // intensity-weighted angular centroid (A-line units)
  int first_aline = 0;    // run of shadowed A-lines, may wrap
  int width_alines = 0;
  int lead_px = 0;        // first bloom sample
  double center_px = 0;   // bloom centre radius
  int bloom_extent_px = 0;
  double peak = 0;        // box mean on the centre A-line
  double peak_min = 0;    // weakest box mean across the run
  double shadow = 0;      // shadow mean / tissue mean
};

struct StrutRecord {
  int frame = 0;
  int aline = 0;
  double aline_pos = 0;
  int first_aline = 0;
  int width_alines = 0;
  int lead_px = 0;
  double center_px = 0;
  int bloom_extent_px = 0;
  double score = 0;           // detector score
  double coverage_score = 0;  // classifier score for "covered"
  bool covered = false;
  double coverage_um = 0;
  double malapposition_um = 0;  // 0 unless the strut is luminal of the boundary
  bool malapposed = false;
};

/// Per-frame tissue statistics shared by detection and features.
struct FrameContext {
  double tissue_ref = 0;        // median surface intensity
  std::vector<double> profile;  // median tissue intensity by depth below the contour
  std::vector<bool> excluded;   // guidewire A-lines

  double profile_mean(int d0, int d1) const {
    d0 = std::max(d0, 0);
    d1 = std::min(d1, static_cast<int>(profile.size()));
    if (d1 <= d0) return 0;
    double s = 0;
    for (int d = d0; d < d1; ++d) s += profile[d];
    return s / (d1 - d0);
  }
};

namespace detail {

inline double median_of(std::vector<double>& v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline double row_mean(const PolarFrame& f, int a, int r0, int r1) {
  r0 = std::max(r0, 0);
  r1 = std::min(r1, f.cols());
  if (r1 <= r0) return 0;
  double s = 0;
  for (int r = r0; r < r1; ++r) s += f(a, r);
  return s / (r1 - r0);
}

inline int contour_px(const Contour& c, int a) { return static_cast<int>(std::lround(c[a])); }

struct PatchStats {
  double mean = 0, sd = 0, max = 0, min = 0, median = 0, frac_bright = 0;
};

inline PatchStats patch_stats(std::vector<double> v, double bright) {
  PatchStats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / v.size());
  s.max = *std::max_element(v.begin(), v.end());
  s.min = *std::min_element(v.begin(), v.end());
  s.frac_bright = static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x > bright; })) /
                  v.size();
  s.median = median_of(v);
  return s;
}

}  // namespace detail

inline FrameContext frame_context(const PolarFrame& frame, const Contour& contour, const std::vector<bool>& excluded,
                                  const DetectOptions& opt = {}) {
  const int n = frame.rows(), n_r = frame.cols();
  FrameContext ctx;
  ctx.excluded = excluded.empty() ? std::vector<bool>(n, false) : excluded;
  std::vector<double> v;
  v.reserve(n);
  for (int a = 0; a < n; ++a)
    if (!ctx.excluded[a]) {
      const int c = detail::contour_px(contour, a);
      v.push_back(detail::row_mean(frame, a, c, c + opt.surface_px));
    }
  ctx.tissue_ref = detail::median_of(v);
  ctx.profile.assign(opt.profile_px, 0.0);
  for (int d = 0; d < opt.profile_px; ++d) {
    v.clear();
    for (int a = 0; a < n; ++a) {
      const int r = detail::contour_px(contour, a) + d;
      if (!ctx.excluded[a] && r >= 0 && r < n_r) v.push_back(frame(a, r));
    }
    ctx.profile[d] = detail::median_of(v);
  }
  return ctx;
}

namespace detail {

struct AlineHit {
  bool hit = false;
  int lead = 0;
  double peak = 0;
  double shadow = 0;
};

inline AlineHit test_aline(const PolarFrame& frame, int a, const Contour& contour, const FrameContext& ctx,
                           const DetectOptions& opt) {
  AlineHit h;
  const int n_r = frame.cols();
  const int c = contour_px(contour, a);
  const int lo = std::max(0, c - opt.inward_px);
  const int hi = std::min(n_r - opt.bloom_px, c + opt.outward_px);
  if (hi <= lo || !(ctx.tissue_ref > 0)) return h;
  auto row = frame.row(a);
  double sum = 0;
  for (int r = lo; r < lo + opt.bloom_px; ++r) sum += row[r];
  double best = sum;
  int best_s = lo;
  for (int s = lo + 1; s <= hi; ++s) {
    sum += static_cast<double>(row[s + opt.bloom_px - 1]) - row[s - 1];
    if (sum > best) {
      best = sum;
      best_s = s;
    }
  }
  h.lead = best_s;
  h.peak = best / opt.bloom_px;
  if (h.peak < opt.peak_ratio * ctx.tissue_ref) return h;
  const int s0 = std::max(best_s + opt.bloom_px + opt.shadow_gap_px, c);
  const int s1 = std::min(n_r, s0 + opt.shadow_px);
  if (s1 <= s0) return h;
  const double tissue = ctx.profile_mean(s0 - c, s1 - c);
  if (!(tissue > 0)) return h;
  h.shadow = row_mean(frame, a, s0, s1) / tissue;
  h.hit = h.shadow < opt.shadow_ratio;
  return h;
}

}  // namespace detail

/// Strut candidates of one frame. Excluded (guidewire) A-lines are never
/// candidates; adjacent candidate A-lines merge into one strut.
inline std::vector<Candidate> detect_candidates(const PolarFrame& frame, const Contour& contour,
                                                const FrameContext& ctx, int frame_index = 0,
                                                const DetectOptions& opt = {}) {
  const int n = frame.rows();
  std::vector<detail::AlineHit> hits(n);
  for (int a = 0; a < n; ++a)
    if (!ctx.excluded[a]) hits[a] = detail::test_aline(frame, a, contour, ctx, opt);

  std::vector<Candidate> out;
  int start = 0;
  while (start < n && hits[start].hit) ++start;
  if (start == n) start = 0;  // every A-line hit: treat as one run from 0
  for (int k = 0; k < n;) {
    const int a0 = wrap_index(start + k, n);
    if (!hits[a0].hit) {
      ++k;
      continue;
    }
    int len = 0;
    while (len < n && k + len < n && hits[wrap_index(a0 + len, n)].hit) ++len;
    double wsum = 0, wpos = 0, pmin = 1e300;
    for (int j = 0; j < len; ++j) {
      const double w = hits[wrap_index(a0 + j, n)].peak;
      wsum += w;
      wpos += w * j;
      pmin = std::min(pmin, w);
    }
    Candidate cd;
    cd.frame = frame_index;
    cd.first_aline = a0;
    cd.width_alines = len;
    const double rel = wsum > 0 ? wpos / wsum : 0.5 * (len - 1);
    cd.aline_pos = std::fmod(a0 + rel, static_cast<double>(n));
    cd.aline = wrap_index(a0 + static_cast<int>(std::lround(rel)), n);
    const auto& h = hits[cd.aline];
    cd.lead_px = h.lead;
    cd.center_px = h.lead + (opt.bloom_px - 1) / 2.0;
    cd.peak = h.peak;
    cd.peak_min = pmin;
    cd.shadow = h.shadow;
    auto row = frame.row(cd.aline);
    const double half = 0.5 * h.peak;
    int lo = static_cast<int>(std::lround(cd.center_px)), hi = lo;
    while (lo > 0 && row[lo - 1] > half) --lo;
    while (hi + 1 < frame.cols() && row[hi + 1] > half) ++hi;
    cd.bloom_extent_px = hi - lo + 1;
    out.push_back(cd);
    k += len;
  }
  std::sort(out.begin(), out.end(), [](const Candidate& x, const Candidate& y) { return x.aline < y.aline; });
  return out;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Bloom and shadow statistics. Intensities are relative to the frame's
/// tissue reference, so the vector is invariant to global gain.
inline std::vector<double> detector_features(const Candidate& cd, const PolarFrame& frame, const Contour& contour,
                                             const FrameContext& ctx, double r_pixel_mm,
                                             const DetectOptions& opt = {}) {
  std::vector<double> f(kDetectorFeatures, 0.0);
  const double ref = ctx.tissue_ref;
  if (!(ref > 0)) return f;
  const int n = frame.rows(), a = cd.aline;
  const int c = detail::contour_px(contour, a);
  const int lead = cd.lead_px, tail = lead + opt.bloom_px;
  const int s0 = std::max(tail + opt.shadow_gap_px, c), s1 = s0 + opt.shadow_px;

  f[0] = cd.peak / ref;
  f[1] = cd.bloom_extent_px;
  f[2] = cd.shadow;
  f[3] = cd.width_alines;
  f[4] = (cd.peak - detail::row_mean(frame, a, lead - 3, lead)) / ref;
  f[5] = (cd.peak - detail::row_mean(frame, a, tail, tail + 3)) / ref;
  f[6] = (cd.center_px - contour[a]) * r_pixel_mm;
  const double far_tissue = ctx.profile_mean(s1 - c, s1 + 60 - c);
  f[7] = far_tissue > 0 ? detail::row_mean(frame, a, s1, s1 + 60) / far_tissue : 0;
  int dark = 0, total = 0;
  for (int r = std::max(0, s0); r < std::min(frame.cols(), s1); ++r, ++total) dark += frame(a, r) < 0.2 * ref;
  f[8] = total ? static_cast<double>(dark) / total : 0;
  const int reach = cd.width_alines / 2 + 2;
  double side_peak = 0, side_shadow = 0;
  for (int s : {-1, 1}) {
    const int b = wrap_index(a + s * reach, n);
    side_peak += detail::row_mean(frame, b, lead, tail);
    side_shadow += detail::row_mean(frame, b, s0, s1);
  }
  f[9] = (cd.peak - side_peak / 2) / ref;
  const double tissue = ctx.profile_mean(s0 - c, s1 - c);
  f[10] = tissue > 0 ? side_shadow / 2 / tissue : 0;
  f[11] = cd.peak > 0 ? cd.peak_min / cd.peak : 0;
  return f;
}

inline constexpr int kCoveragePatchPx = 12;

/// Centre patch (strut A-lines just in front of the bloom) and side patches
/// (angularly adjacent A-lines over the same depths).
inline std::vector<double> coverage_features(const Candidate& cd, const PolarFrame& frame, const Contour& contour,
                                             const FrameContext& ctx, double r_pixel_mm) {
  std::vector<double> f(kCoverageFeatures, 0.0);
  const double ref = ctx.tissue_ref;
  if (!(ref > 0)) return f;
  const int n = frame.rows(), n_r = frame.cols(), a = cd.aline, lead = cd.lead_px;
  const int r0 = std::max(0, lead - kCoveragePatchPx), r1 = std::min(n_r, lead);
  auto collect = [&](int from, int count) {
    std::vector<double> v;
    for (int k = 0; k < count; ++k) {
      const int b = wrap_index(from + k, n);
      if (ctx.excluded[b]) continue;
      for (int r = r0; r < r1; ++r) v.push_back(frame(b, r) / ref);
    }
    return v;
  };
  const auto centre = detail::patch_stats(collect(cd.first_aline, cd.width_alines), 0.3);
  const auto left = detail::patch_stats(collect(cd.first_aline - 3, 3), 0.3);
  const auto right = detail::patch_stats(collect(cd.first_aline + cd.width_alines, 3), 0.3);
  f[0] = centre.mean;
  f[1] = centre.sd;
  f[2] = centre.max;
  f[3] = centre.min;
  f[4] = centre.median;
  f[5] = centre.frac_bright;
  f[6] = left.mean;
  f[7] = left.sd;
  f[8] = left.max;
  f[9] = right.mean;
  f[10] = right.sd;
  f[11] = right.max;
  f[12] = centre.mean - 0.5 * (left.mean + right.mean);
  f[13] = detail::row_mean(frame, a, lead - 3, lead) / ref;
  f[14] = (lead - contour[a]) * r_pixel_mm;
  double lumen = 0, surface = 0;
  for (int s : {-1, 1}) {
    const int b = wrap_index(a + s * (cd.width_alines / 2 + 2), n);
    const int c = detail::contour_px(contour, b);
    lumen += detail::row_mean(frame, b, c - 30, c - 10);
    surface += detail::row_mean(frame, b, c, c + 10);
  }
  f[15] = lumen / 2 / ref;
  f[16] = surface / 2 / ref;
  f[17] = cd.peak / ref;
  f[18] = lead > 0 && lead < n_r ? (static_cast<double>(frame(a, lead)) - frame(a, lead - 1)) / ref : 0;
  int rise = 0;
  for (int r = std::max(0, lead - 30); r < lead; ++r)
    if (frame(a, r) > 0.5 * ref) {
      rise = r - lead;
      break;
    }
  f[19] = rise;
  f[20] = centre.mean > 0 ? centre.sd / centre.mean : 0;
  return f;
}

// ---------------------------------------------------------------------------
// Classification and measurement
// ---------------------------------------------------------------------------

inline StrutRecord to_record(const Candidate& cd) {
  StrutRecord s;
  s.frame = cd.frame;
  s.aline = cd.aline;
  s.aline_pos = cd.aline_pos;
  s.first_aline = cd.first_aline;
  s.width_alines = cd.width_alines;
  s.lead_px = cd.lead_px;
  s.center_px = cd.center_px;
  s.bloom_extent_px = cd.bloom_extent_px;
  return s;
}

/// Candidates the detector scores at or above the threshold.
inline std::vector<StrutRecord> classify_struts(const std::vector<Candidate>& cands, const PolarFrame& frame,
                                                const Contour& contour, const FrameContext& ctx,
                                                const ml::TrainedModel& detector, double r_pixel_mm,
                                                const StrutOptions& opt = {}) {
  detector.require(ml::ModelKind::strut_detector);
  std::vector<StrutRecord> out;
  for (const auto& cd : cands) {
    const double s = detector.score(detector_features(cd, frame, contour, ctx, r_pixel_mm, opt.detect));
    if (s < opt.detector_threshold) continue;
    auto rec = to_record(cd);
    rec.score = s;
    out.push_back(rec);
  }
  return out;
}

/// Radial distance from the bloom's leading edge to the lumen boundary.
inline double coverage_thickness_um(int lead_px, double boundary_px, double r_pixel_um) {
  return std::max(0.0, (lead_px - boundary_px) * r_pixel_um);
}

struct CoverageResult {
  bool covered = false;
  double coverage_um = 0;
  double score = 0;
};

/// A strut is covered only when the classifier says so and tissue of
/// positive thickness is measured in front of it.
inline CoverageResult classify_coverage(const Candidate& cd, const PolarFrame& frame, const Contour& contour,
                                        const FrameContext& ctx, const ml::TrainedModel& model,
                                        const Calibration& cal) {
  model.require(ml::ModelKind::coverage_classifier);
  CoverageResult r;
  r.score = model.score(coverage_features(cd, frame, contour, ctx, cal.r_pixel_mm()));
  const double um = coverage_thickness_um(cd.lead_px, contour[cd.aline], cal.r_pixel_um);
  r.covered = r.score >= 0.5 && um > 0;
  r.coverage_um = r.covered ? um : 0;
  return r;
}

struct Malapposition {
  double distance_um = 0;
  bool luminal = false;
  bool flagged = false;
};

/// Closest distance from the strut centre to the lumen boundary.
inline Malapposition measure_malapposition(double center_px, int aline, const Contour& contour,
                                           const Calibration& cal, double strut_thickness_um = 80,
                                           double threshold_um = 20) {
  const int n = contour.size();
  const Point2 p = polar_point(center_px, aline, n);
  double best = 1e300;
  for (int a = 0; a < n; ++a) best = std::min(best, distance(p, polar_point(contour[a], a, n)));
  Malapposition m;
  m.distance_um = best * cal.r_pixel_um;
  m.luminal = center_px < contour[aline];
  m.flagged = m.luminal && m.distance_um > strut_thickness_um + threshold_um;
  return m;
}

/// Periodic linear interpolation of strut (angle, radius) points.
inline Contour fit_stent_contour(const std::vector<StrutRecord>& struts, int n_alines) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : struts) pts.emplace_back(s.aline_pos, s.center_px);
  std::sort(pts.begin(), pts.end());
  // Coincident angles collapse to their mean radius.
  std::vector<std::pair<double, double>> u;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    double s = 0;
    while (j < pts.size() && pts[j].first == pts[i].first) s += pts[j++].second;
    u.emplace_back(pts[i].first, s / (j - i));
    i = j;
  }
  if (u.size() < 2) throw InsufficientStruts("stent contour needs at least two struts");
  Contour c;
  c.radius.resize(n_alines);
  const std::size_t m = u.size();
  for (int a = 0; a < n_alines; ++a) {
    // Segment [u[k], u[k+1]) containing a, with the last segment wrapping.
    std::size_t k = m - 1;
    for (std::size_t i = 0; i < m; ++i)
      if (u[i].first <= a) k = i;
    const auto& p0 = u[k];
    const auto& p1 = u[(k + 1) % m];
    double span = p1.first - p0.first;
    double off = a - p0.first;
    if (span <= 0) span += n_alines;
    if (off < 0) off += n_alines;
    c[a] = p0.second + (p1.second - p0.second) * off / span;
  }
  return c;
}

struct StentModels {
  ml::TrainedModel detector;
  ml::TrainedModel coverage;
};

/// Full per-frame strut analysis on one frame.
inline std::vector<StrutRecord> analyze_frame(const PolarFrame& frame, int frame_index, const Contour& lumen,
                                              const std::vector<bool>& excluded, const StentModels& models,
                                              const Calibration& cal, const StrutOptions& opt = {}) {
  const auto ctx = frame_context(frame, lumen, excluded, opt.detect);
  const auto cands = detect_candidates(frame, lumen, ctx, frame_index, opt.detect);
  models.detector.require(ml::ModelKind::strut_detector);
  models.coverage.require(ml::ModelKind::coverage_classifier);
  std::vector<StrutRecord> out;
  for (const auto& cd : cands) {
    const double s = models.detector.score(detector_features(cd, frame, lumen, ctx, cal.r_pixel_mm(), opt.detect));
    if (s < opt.detector_threshold) continue;
    auto rec = to_record(cd);
    rec.score = s;
    const auto cov = classify_coverage(cd, frame, lumen, ctx, models.coverage, cal);
    rec.coverage_score = cov.score;
    rec.covered = cov.covered;
    rec.coverage_um = cov.coverage_um;
    const auto mal = measure_malapposition(rec.center_px, rec.aline, lumen, cal, opt.strut_thickness_um,
                                           opt.malapposition_threshold_um);
    rec.malapposition_um = mal.luminal ? mal.distance_um : 0;
    rec.malapposed = mal.flagged;
    out.push_back(rec);
  }
  return out;
}

/// Strut records for the frames in [first, last]. Frames without a lumen
/// contour are skipped.
inline std::vector<StrutRecord> analyze_pullback(const Pullback& pb, const std::vector<std::optional<Contour>>& lumen,
                                                 const preprocess::GuidewireBand& band, const StentModels& models,
                                                 int first, int last, const StrutOptions& opt = {}) {
  std::vector<std::vector<StrutRecord>> per(pb.n_frames());
  parallel_for(last - first + 1, [&](int i) {
    const int f = first + i;
    if (!lumen[f]) return;
    per[f] = analyze_frame(pb.frames[f], f, *lumen[f], band.mask(f, pb.n_alines), models, pb.calibration, opt);
  });
  std::vector<StrutRecord> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct FrameStent {
  int frame = 0;
  int struts = 0;
  int covered = 0;
  int uncovered = 0;
  int malapposed = 0;
};

struct Segment {
  int first = 0;
  int last = 0;
  double length_mm = 0;
};

struct StentReport {
  std::vector<FrameStent> frames;
  int struts = 0;
  int covered = 0;
  int uncovered = 0;
  int malapposed = 0;
  double percent_covered = 0;
  double mean_coverage_um = 0;      // over covered struts
  double mean_malapposition_um = 0; // over malapposed struts
  double max_malapposition_um = 0;
  std::vector<Segment> malapposed_segments;
  std::vector<Segment> uncovered_segments;
  double malapposed_length_mm = 0;
  double uncovered_length_mm = 0;
};

namespace detail {

inline std::vector<Segment> runs(const std::vector<int>& frames, double spacing_mm) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < frames.size();) {
    std::size_t j = i;
    while (j + 1 < frames.size() && frames[j + 1] == frames[j] + 1) ++j;
    out.push_back({frames[i], frames[j], (frames[j] - frames[i] + 1) * spacing_mm});
    i = j + 1;
  }
  return out;
}

}  // namespace detail

/// Segment lengths count whole frames: k consecutive frames span k × spacing.
inline StentReport summarize_stent(const std::vector<StrutRecord>& records, double frame_spacing_mm) {
  StentReport rep;
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return records[x].frame < records[y].frame; });
  double cov_sum = 0, mal_sum = 0;
  for (int i : order) {
    const auto& s = records[i];
    if (rep.frames.empty() || rep.frames.back().frame != s.frame) rep.frames.push_back({s.frame});
    auto& fs = rep.frames.back();
    ++fs.struts;
    ++rep.struts;
    if (s.covered) {
      ++fs.covered;
      ++rep.covered;
      cov_sum += s.coverage_um;
    } else {
      ++fs.uncovered;
      ++rep.uncovered;
    }
    if (s.malapposed) {
      ++fs.malapposed;
      ++rep.malapposed;
      mal_sum += s.malapposition_um;
      rep.max_malapposition_um = std::max(rep.max_malapposition_um, s.malapposition_um);
    }
  }
  if (rep.struts) rep.percent_covered = 100.0 * rep.covered / rep.struts;
  if (rep.covered) rep.mean_coverage_um = cov_sum / rep.covered;
  if (rep.malapposed) rep.mean_malapposition_um = mal_sum / rep.malapposed;
  std::vector<int> mal, unc;
  for (const auto& fs : rep.frames) {
    if (fs.malapposed) mal.push_back(fs.frame);
    if (fs.uncovered) unc.push_back(fs.frame);
  }
  rep.malapposed_segments = detail::runs(mal, frame_spacing_mm);
  rep.uncovered_segments = detail::runs(unc, frame_spacing_mm);
  for (const auto& s : rep.malapposed_segments) rep.malapposed_length_mm += s.length_mm;
  for (const auto& s : rep.uncovered_segments) rep.uncovered_length_mm += s.length_mm;
  return rep;
}

}  // namespace octopus::stent
