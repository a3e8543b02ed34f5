#pragma once

// Guidewire detection and removal, lumen segmentation by dynamic programming,
// pixel shifting and noise filtering.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "octopus/core.hpp"
#include "octopus/morphology.hpp"
#include "octopus/parallel.hpp"

namespace octopus::preprocess {

// ---------------------------------------------------------------------------
// Accumulated intensity map
// ---------------------------------------------------------------------------

/// n_frames x n_alines. Entry = A-line intensity sum, min-max normalised per frame.
using IntensityMap = Image<float>;

inline IntensityMap accumulate_intensity(const Pullback& pb) {
  IntensityMap map(pb.n_frames(), pb.n_alines, 0.0f);
  parallel_for(pb.n_frames(), [&](int f) {
    std::vector<double> sums(pb.n_alines);
    for (int a = 0; a < pb.n_alines; ++a) {
      auto row = pb.frames[f].row(a);
      sums[a] = std::accumulate(row.begin(), row.end(), 0.0);
    }
    const auto [mn, mx] = std::minmax_element(sums.begin(), sums.end());
    const double range = *mx - *mn;
    for (int a = 0; a < pb.n_alines; ++a)
      map(f, a) = range > 0 ? static_cast<float>((sums[a] - *mn) / range) : 0.0f;
  });
  return map;
}

// ---------------------------------------------------------------------------
// Guidewire
// ---------------------------------------------------------------------------

struct GuidewireBand {
  std::vector<std::optional<AngularBand>> frames;  // nullopt: no guidewire on that frame

  bool empty() const noexcept {
    return std::none_of(frames.begin(), frames.end(), [](const auto& b) { return b.has_value(); });
  }
  std::vector<bool> mask(int frame, int n_alines) const {
    std::vector<bool> m(n_alines, false);
    if (frame < static_cast<int>(frames.size()) && frames[frame])
      for (int a = 0; a < n_alines; ++a) m[a] = frames[frame]->contains(a, n_alines);
    return m;
  }
};

struct GuidewireOptions {
  int jump = 3;         // max A-line move of each edge between consecutive frames
  int edge_window = 3;  // A-lines averaged on each side of an edge
  /// Minimum band darkness, in robust-sigma units of the normalised map, below
  /// which the pullback is reported as having no guidewire shadow.
  double min_contrast = 8.0;
  /// A shadow is near-empty: mean band intensity over the frame median must
  /// not exceed this. Broad signal-poor plaque stays well above it.
  double max_band_ratio = 0.25;
};

namespace detail {

/// Max-sum path over frames on a circular state axis with |step| <= jump.
inline std::vector<int> circular_track(const Image<float>& score, int jump, double* total) {
  const int nf = score.rows(), n = score.cols();
  std::vector<double> prev(n), cur(n);
  Image<int> back(nf, n, 0);
  for (int a = 0; a < n; ++a) prev[a] = score(0, a);
  for (int f = 1; f < nf; ++f) {
    for (int a = 0; a < n; ++a) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = a;
      for (int d = -jump; d <= jump; ++d) {
        const int p = wrap_index(a + d, n);
        if (prev[p] > best) {
          best = prev[p];
          arg = p;
        }
      }
      cur[a] = best + score(f, a);
      back(f, a) = arg;
    }
    std::swap(prev, cur);
  }
  std::vector<int> path(nf);
  path[nf - 1] = static_cast<int>(std::max_element(prev.begin(), prev.end()) - prev.begin());
  if (total) *total = prev[path[nf - 1]];
  for (int f = nf - 1; f > 0; --f) path[f - 1] = back(f, path[f]);
  return path;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

/// Two max-sum edge paths over the frame axis, one on the bright-to-dark edge
/// entering the shadow and one on the dark-to-bright edge leaving it. The band
/// is the angular interval between them.
inline GuidewireBand detect_guidewire(const IntensityMap& map, const GuidewireOptions& opt = {}) {
  const int nf = map.rows(), n = map.cols();
  GuidewireBand band;
  if (nf == 0 || n == 0) throw NoShadowFound("empty intensity map");
  const int w = std::max(1, opt.edge_window);
  Image<float> enter(nf, n), leave(nf, n);
  for (int f = 0; f < nf; ++f) {
    for (int a = 0; a < n; ++a) {
      double before = 0, inside = 0, inside_end = 0, after = 0;
      for (int k = 1; k <= w; ++k) {
        before += map(f, wrap_index(a - k, n));
        inside += map(f, wrap_index(a + k - 1, n));
        inside_end += map(f, wrap_index(a - k + 1, n));
        after += map(f, wrap_index(a + k, n));
      }
      enter(f, a) = static_cast<float>((before - inside) / w);
      leave(f, a) = static_cast<float>((after - inside_end) / w);
    }
  }
  const auto lower = detail::circular_track(enter, opt.jump, nullptr);
  const auto upper = detail::circular_track(leave, opt.jump, nullptr);

  double contrast_sum = 0, ratio_sum = 0;
  band.frames.resize(nf);
  for (int f = 0; f < nf; ++f) {
    AngularBand b{lower[f], upper[f]};
    band.frames[f] = b;
    std::vector<double> row(n);
    for (int a = 0; a < n; ++a) row[a] = map(f, a);
    const double med = detail::median(row);
    std::vector<double> dev(n);
    for (int a = 0; a < n; ++a) dev[a] = std::abs(row[a] - med);
    const double sigma = std::max(1.4826 * detail::median(dev), 0.01);
    double inside = 0;
    const int width = b.width(n);
    for (int k = 0; k < width; ++k) inside += row[wrap_index(b.lower + k, n)];
    inside /= width;
    contrast_sum += (med - inside) / sigma;
    ratio_sum += med > 0 ? inside / med : 1.0;
  }
  const double contrast = contrast_sum / nf, ratio = ratio_sum / nf;
  if (!(contrast >= opt.min_contrast))
    throw NoShadowFound("guidewire band contrast " + std::to_string(contrast) + " below floor");
  if (!(ratio <= opt.max_band_ratio))
    throw NoShadowFound("guidewire band not dark enough (mean/median " + std::to_string(ratio) + ")");
  return band;
}

/// Marks every pixel of banded A-lines as guidewire. Idempotent.
inline LabelVolume mask_guidewire(const LabelVolume& labels, const GuidewireBand& band) {
  LabelVolume out = labels;
  for (int f = 0; f < out.n_frames(); ++f) {
    const auto m = band.mask(f, out.n_alines);
    for (int a = 0; a < out.n_alines; ++a)
      if (m[a])
        for (auto& v : out.frames[f].row(a)) v = code(Label::guidewire);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

/// Radial 1-D smoothing of one A-line with edge replication.
inline void smooth_line(std::span<const float> in, std::span<float> out, const std::vector<double>& k) {
  const int n = static_cast<int>(in.size());
  const int radius = static_cast<int>(k.size() / 2);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = -radius; j <= radius; ++j) s += k[j + radius] * in[std::clamp(i + j, 0, n - 1)];
    out[i] = static_cast<float>(s);
  }
}

/// Separable Gaussian blur. Columns replicate their edges; rows wrap when
/// `wrap_rows` (the A-line axis of polar data), otherwise replicate.
inline FloatImage gaussian_filter(const FloatImage& in, double sigma, bool wrap_rows = true) {
  if (sigma < 0) throw InvalidArgument("sigma must be >= 0");
  if (sigma == 0 || in.empty()) return in;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int R = in.rows(), C = in.cols();
  FloatImage tmp(R, C), out(R, C);
  for (int r = 0; r < R; ++r) smooth_line(in.row(r), tmp.row(r), k);
  std::vector<double> acc(C);
  for (int r = 0; r < R; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int j = -radius; j <= radius; ++j) {
      const int rr = wrap_rows ? wrap_index(r + j, R) : std::clamp(r + j, 0, R - 1);
      const double w = k[j + radius];
      auto src = tmp.row(rr);
      for (int c = 0; c < C; ++c) acc[c] += w * src[c];
    }
    auto dst = out.row(r);
    for (int c = 0; c < C; ++c) dst[c] = static_cast<float>(acc[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Periodic dynamic programming
// ---------------------------------------------------------------------------

struct PeriodicPath {
  std::vector<int> states;  // one column index per row
  double score = -std::numeric_limits<double>::infinity();
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Forward max-sum DP with |step| <= jump. `start` < 0 leaves the first row free.
inline void forward_dp(const Image<float>& score, int jump, int start, Image<double>& value,
                       Image<int>& back) {
  const int n = score.rows(), R = score.cols();
  for (int r = 0; r < R; ++r)
    value(0, r) = (start < 0 || r == start) ? static_cast<double>(score(0, r)) : kNegInf;
  for (int i = 1; i < n; ++i) {
    for (int r = 0; r < R; ++r) {
      double best = kNegInf;
      int arg = r;
      const int lo = std::max(0, r - jump), hi = std::min(R - 1, r + jump);
      for (int p = lo; p <= hi; ++p)
        if (value(i - 1, p) > best) {
          best = value(i - 1, p);
          arg = p;
        }
      value(i, r) = best + score(i, r);
      back(i, r) = arg;
    }
  }
}

inline std::vector<int> backtrack(const Image<int>& back, int last) {
  const int n = back.rows();
  std::vector<int> path(n);
  path[n - 1] = last;
  for (int i = n - 1; i > 0; --i) path[i - 1] = back(i, path[i]);
  return path;
}

}  // namespace detail

/// Exact max-sum closed path: one state per row, |s[i+1] - s[i]| <= jump and
/// |s[0] - s[n-1]| <= jump. An unconstrained pass supplies per-start upper
/// bounds; constrained passes run in bound order until no start can improve.
inline PeriodicPath solve_periodic_path(const Image<float>& score, int jump) {
  const int n = score.rows(), R = score.cols();
  PeriodicPath best;
  if (n == 0 || R == 0) return best;
  if (jump < 0) throw InvalidArgument("jump must be >= 0");
  Image<double> value(n, R);
  Image<int> back(n, R, 0);

  detail::forward_dp(score, jump, -1, value, back);
  int last = 0;
  for (int r = 1; r < R; ++r)
    if (value(n - 1, r) > value(n - 1, last)) last = r;
  auto open = detail::backtrack(back, last);
  if (n == 1 || std::abs(open.front() - open.back()) <= jump) {
    best.states = std::move(open);
    best.score = value(n - 1, last);
    return best;
  }

  // Upper bound per start state: best open path beginning there.
  std::vector<double> bound(R), nxt(R);
  for (int r = 0; r < R; ++r) bound[r] = score(n - 1, r);
  for (int i = n - 2; i >= 0; --i) {
    for (int r = 0; r < R; ++r) {
      double b = detail::kNegInf;
      for (int p = std::max(0, r - jump); p <= std::min(R - 1, r + jump); ++p) b = std::max(b, bound[p]);
      nxt[r] = b + score(i, r);
    }
    std::swap(bound, nxt);
  }
  std::vector<int> order(R);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return bound[a] > bound[b]; });

  for (int start : order) {
    if (bound[start] <= best.score) break;
    detail::forward_dp(score, jump, start, value, back);
    int end = -1;
    for (int r = std::max(0, start - jump); r <= std::min(R - 1, start + jump); ++r)
      if (end < 0 || value(n - 1, r) > value(n - 1, end)) end = r;
    if (end >= 0 && value(n - 1, end) > best.score) {
      best.score = value(n - 1, end);
      best.states = detail::backtrack(back, end);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Lumen segmentation
// ---------------------------------------------------------------------------

struct LumenOptions {
  int jump = 4;              // max radial step between neighbouring A-lines (px)
  double sigma = 2.0;        // radial smoothing before the gradient
  int min_radius_px = 10;    // ignore the catheter region
  double min_score = 0.02;   // mean normalised edge strength along the path
  int opening_radius = 2;    // disk radius of the mask opening (kernel size 5)
  double shadow_ratio = 0.1; // A-line tail below this fraction of the frame's typical tail is a shadow
};

struct LumenResult {
  Contour contour;
  bool failed = false;
  bool interpolated = false;  // some A-lines bridged (guidewire or shadow)
  double score = 0;           // mean normalised edge strength
};

/// Dark-to-bright radial edge strength: s[r + 2] - s[r - 3] over the smoothed
/// A-line, i.e. a 5-px baseline centred on the interface before sample r.
inline FloatImage radial_edge_strength(const PolarFrame& frame, double sigma) {
  const int n = frame.rows(), n_r = frame.cols();
  const auto k = gaussian_kernel(sigma);
  FloatImage edge(n, n_r, 0.0f);
  std::vector<float> line(n_r), smooth(n_r);
  for (int a = 0; a < n; ++a) {
    auto src = frame.row(a);
    std::copy(src.begin(), src.end(), line.begin());
    smooth_line(line, smooth, k);
    auto dst = edge.row(a);
    for (int r = 3; r + 2 < n_r; ++r) dst[r] = smooth[r + 2] - smooth[r - 3];
  }
  return edge;
}

/// A-lines whose signal behind their brightest sample collapses to (near) zero:
/// strut and guidewire shadows. Independent of any lumen estimate.
inline std::vector<bool> detect_shadow_alines(const PolarFrame& frame, double ratio, int window = 100) {
  const int n = frame.rows(), n_r = frame.cols();
  std::vector<double> tail(n, 0.0);
  for (int a = 0; a < n; ++a) {
    auto row = frame.row(a);
    const int peak = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    const int lo = std::min(n_r, peak + 8), hi = std::min(n_r, lo + window);
    double s = 0;
    for (int r = lo; r < hi; ++r) s += row[r];
    tail[a] = hi > lo ? s / (hi - lo) : 0.0;
  }
  const double ref = detail::median(tail);
  std::vector<bool> out(n, false);
  for (int a = 0; a < n; ++a) out[a] = ref > 0 && tail[a] < ratio * ref;
  return out;
}

/// Periodic linear interpolation of contour values over excluded A-lines.
inline bool bridge_excluded(Contour& c, const std::vector<bool>& excluded) {
  const int n = c.size();
  std::vector<int> anchors;
  for (int a = 0; a < n; ++a)
    if (!excluded[a]) anchors.push_back(a);
  if (anchors.empty() || static_cast<int>(anchors.size()) == n) return false;
  const int m = static_cast<int>(anchors.size());
  for (int k = 0; k < m; ++k) {
    const int a0 = anchors[k], a1 = anchors[(k + 1) % m];
    int gap = wrap_index(a1 - a0, n);
    if (gap == 0) gap = n;
    for (int s = 1; s < gap; ++s) {
      const double f = static_cast<double>(s) / gap;
      c[wrap_index(a0 + s, n)] = (1 - f) * c[a0] + f * c[a1];
    }
  }
  return true;
}

/// Opening of the polar lumen mask (r < contour) with a disk; returns the
/// contour of the opened mask (one past the outermost lumen pixel).
inline Contour open_lumen_contour(const Contour& c, int n_r, int radius) {
  if (radius <= 0) return c;
  const int n = c.size();
  morph::Mask mask(n, n_r, 0);
  for (int a = 0; a < n; ++a) {
    const int lim = std::clamp(static_cast<int>(std::lround(c[a])), 0, n_r);
    for (int r = 0; r < lim; ++r) mask(a, r) = 1;
  }
  const auto opened = morph::open(mask, morph::disk(radius), true);
  Contour out = c;
  for (int a = 0; a < n; ++a) {
    int last = -1;
    auto row = opened.row(a);
    for (int r = 0; r < n_r; ++r)
      if (row[r]) last = r;
    out[a] = last + 1;
  }
  return out;
}

/// Lumen boundary of one frame. `excluded` A-lines contribute no edge
/// evidence and are bridged by interpolation afterwards.
inline LumenResult segment_lumen_frame(const PolarFrame& frame, const std::vector<bool>& excluded,
                                       const LumenOptions& opt = {}) {
  const int n = frame.rows(), n_r = frame.cols();
  LumenResult res;
  const auto edge = radial_edge_strength(frame, opt.sigma);
  double norm = 1.0;
  for (auto v : frame.data()) norm = std::max(norm, static_cast<double>(v));

  const int r_lo = std::clamp(opt.min_radius_px, 3, n_r - 3);
  const int r_hi = n_r - 3;
  const int R = r_hi - r_lo;
  FloatImage score(n, R, 0.0f);
  int used = 0;
  for (int a = 0; a < n; ++a) {
    if (excluded[a]) continue;
    ++used;
    for (int j = 0; j < R; ++j) score(a, j) = static_cast<float>(edge(a, r_lo + j) / norm);
  }
  if (used == 0) throw SegmentationFailed("every A-line is excluded");
  const auto path = solve_periodic_path(score, opt.jump);
  res.score = path.score / used;
  if (!(res.score >= opt.min_score))
    throw SegmentationFailed("lumen edge score " + std::to_string(res.score) + " below floor");

  res.contour.radius.resize(n);
  for (int a = 0; a < n; ++a) res.contour[a] = path.states[a] + r_lo;
  res.interpolated = bridge_excluded(res.contour, excluded);
  res.contour = open_lumen_contour(res.contour, n_r, opt.opening_radius);
  return res;
}

/// Per-frame lumen segmentation. Failed frames carry `failed` and an empty contour.
inline std::vector<LumenResult> segment_lumen_dp(const Pullback& pb, const GuidewireBand& band,
                                                 const LumenOptions& opt = {}, bool bridge_shadows = true) {
  std::vector<LumenResult> out(pb.n_frames());
  parallel_for(pb.n_frames(), [&](int f) {
    auto excluded = band.mask(f, pb.n_alines);
    if (bridge_shadows) {
      const auto shadow = detect_shadow_alines(pb.frames[f], opt.shadow_ratio);
      for (int a = 0; a < pb.n_alines; ++a) excluded[a] = excluded[a] || shadow[a];
    }
    try {
      out[f] = segment_lumen_frame(pb.frames[f], excluded, opt);
    } catch (const SegmentationFailed&) {
      out[f].failed = true;
    }
  });
  return out;
}

/// Lumen label layer (r < contour) with guidewire A-lines labelled on top.
inline LabelFrame lumen_labels(const Contour& c, int n_r, const std::vector<bool>& guidewire) {
  const int n = c.size();
  LabelFrame lab(n, n_r, code(Label::background));
  for (int a = 0; a < n; ++a) {
    auto row = lab.row(a);
    if (!guidewire.empty() && guidewire[a]) {
      std::fill(row.begin(), row.end(), code(Label::guidewire));
      continue;
    }
    const int lim = std::clamp(static_cast<int>(std::lround(c[a])), 0, n_r);
    std::fill(row.begin(), row.begin() + lim, code(Label::lumen));
  }
  return lab;
}

// ---------------------------------------------------------------------------
// Pixel shifting
// ---------------------------------------------------------------------------

/// Per-A-line left shift that moves the lumen border to column 0.
struct ShiftRecord {
  std::vector<int> shifts;
};

inline ShiftRecord shift_record(const Contour& c, int n_r) {
  ShiftRecord s;
  s.shifts.resize(c.size());
  for (int a = 0; a < c.size(); ++a)
    s.shifts[a] = std::clamp(static_cast<int>(std::lround(c[a])), 0, n_r);
  return s;
}

/// out(a, r) = in(a, r + shift[a]); samples past the array end are zero.
template <typename T>
Image<T> pixel_shift(const Image<T>& in, const ShiftRecord& rec) {
  Image<T> out(in.rows(), in.cols(), T{});
  const int n_r = in.cols();
  for (int a = 0; a < in.rows(); ++a) {
    const int s = rec.shifts[a];
    auto src = in.row(a);
    auto dst = out.row(a);
    for (int r = 0; r + s < n_r; ++r) dst[r] = src[r + s];
  }
  return out;
}

/// Inverse of pixel_shift for a (possibly cropped) shifted patch; pixels not
/// covered by the patch are `fill`.
template <typename T>
Image<T> unshift(const Image<T>& patch, const ShiftRecord& rec, int n_r, T fill = T{}) {
  Image<T> out(patch.rows(), n_r, fill);
  for (int a = 0; a < patch.rows(); ++a) {
    const int s = rec.shifts[a];
    auto src = patch.row(a);
    auto dst = out.row(a);
    for (int r = 0; r < patch.cols() && r + s < n_r; ++r) dst[r + s] = src[r];
  }
  return out;
}

struct ShiftedPullback {
  std::vector<PolarFrame> frames;
  std::vector<ShiftRecord> records;
};

inline ShiftedPullback pixel_shift(const Pullback& pb, const std::vector<Contour>& contours) {
  ShiftedPullback out;
  out.frames.resize(pb.n_frames());
  out.records.resize(pb.n_frames());
  parallel_for(pb.n_frames(), [&](int f) {
    out.records[f] = shift_record(contours[f], pb.n_r);
    out.frames[f] = pixel_shift(pb.frames[f], out.records[f]);
  });
  return out;
}

/// Model-input patch: pixel shift, crop to depth_px, Gaussian filter.
inline FloatImage model_patch(const PolarFrame& frame, const ShiftRecord& rec, int depth_px, double sigma) {
  return gaussian_filter(crop_depth(pixel_shift(frame, rec), depth_px).cast<float>(), sigma, true);
}

}  // namespace octopus::preprocess
