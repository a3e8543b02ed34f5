#pragma once

// Lumen and calcification attributes, lesion summaries, calcium score,
// en face maps, longitudinal cut views and manual measurements.
//
// Angles are counted in A-lines about the catheter (each A-line is a ray from
// the polar origin). All radial distances use the stored radial index times
// r_pixel_um.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "octopus/core.hpp"

namespace octopus::quant {

struct FrameFlags {
  bool guidewire_interpolated = false;
  bool segmentation_failed = false;
};

struct LumenQuant {
  double area_mm2 = 0;
  double diam_max_mm = 0;
  double diam_min_mm = 0;
  double diam_mean_mm = 0;
  Point2 centroid_mm;
};

struct CalciumQuant {
  double angle_deg = 0;
  std::optional<double> max_thickness_mm;
  std::optional<double> min_depth_mm;
};

struct FrameQuant {
  int frame = 0;
  double lumen_area_mm2 = 0;
  double lumen_diam_max_mm = 0;
  double lumen_diam_min_mm = 0;
  double lumen_diam_mean_mm = 0;
  double calc_angle_deg = 0;
  std::optional<double> calc_max_thickness_mm;
  std::optional<double> calc_min_depth_mm;
  bool gated = false;
  FrameFlags flags;
};

struct ScoreThresholds {
  double angle_deg = 180.0;
  double length_mm = 5.0;
  double thickness_mm = 0.5;
};

struct LesionQuant {
  int first_frame = 0;
  int last_frame = 0;
  double length_mm = 0;
  double max_angle_deg = 0;
  double max_thickness_mm = 0;
  std::optional<double> min_depth_mm;
  int calcium_score = 0;
};

// ---------------------------------------------------------------------------
// Lumen
// ---------------------------------------------------------------------------

inline std::vector<Point2> contour_points_mm(const Contour& contour, const Calibration& cal) {
  const int n = contour.size();
  std::vector<Point2> pts(n);
  for (int i = 0; i < n; ++i) pts[i] = polar_point(contour[i] * cal.r_pixel_mm(), i, n);
  return pts;
}

inline double shoelace_area(const std::vector<Point2>& p) {
  double s = 0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = p[i];
    const auto& b = p[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

inline Point2 polygon_centroid(const std::vector<Point2>& p) {
  const double area = shoelace_area(p);
  if (std::abs(area) < 1e-15) return {};
  double cx = 0, cy = 0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = p[i];
    const auto& b = p[(i + 1) % n];
    const double cr = a.x * b.y - b.x * a.y;
    cx += (a.x + b.x) * cr;
    cy += (a.y + b.y) * cr;
  }
  return {cx / (6 * area), cy / (6 * area)};
}

/// Farthest intersection of the ray origin + t*dir (t > 0) with the polygon.
inline double ray_polygon_hit(const std::vector<Point2>& p, Point2 origin, Point2 dir) {
  double best = 0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = p[i];
    const Point2 b = p[(i + 1) % n];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double den = dir.x * ey - dir.y * ex;
    if (std::abs(den) < 1e-15) continue;
    const double wx = a.x - origin.x, wy = a.y - origin.y;
    const double t = (wx * ey - wy * ex) / den;
    const double s = (wx * dir.y - wy * dir.x) / den;
    if (t > 0 && s >= -1e-12 && s <= 1 + 1e-12) best = std::max(best, t);
  }
  return best;
}

/// Shoelace area plus centroid chords sampled at every A-line angle over 180 degrees.
inline LumenQuant lumen_quant(const Contour& contour, const Calibration& cal) {
  LumenQuant q;
  const int n = contour.size();
  if (n < 3) return q;
  const auto pts = contour_points_mm(contour, cal);
  q.area_mm2 = std::abs(shoelace_area(pts));
  q.centroid_mm = polygon_centroid(pts);
  const int n_chords = std::max(1, n / 2);
  double sum = 0, mx = 0, mn = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_chords; ++k) {
    const double t = aline_angle_rad(k, n);
    const Point2 d{std::cos(t), std::sin(t)};
    const double len = ray_polygon_hit(pts, q.centroid_mm, d) +
                       ray_polygon_hit(pts, q.centroid_mm, {-d.x, -d.y});
    sum += len;
    mx = std::max(mx, len);
    mn = std::min(mn, len);
  }
  q.diam_max_mm = mx;
  q.diam_min_mm = mn;
  q.diam_mean_mm = sum / n_chords;
  return q;
}

inline bool is_guidewire_aline(const LabelFrame& labels, int a) {
  for (auto v : labels.row(a))
    if (v == code(Label::guidewire)) return true;
  return false;
}

/// Lumen boundary implied by a label frame: one past the outermost lumen
/// pixel on each A-line. A-lines without lumen pixels (guidewire shadow or an
/// unlabeled line) are bridged by periodic linear interpolation.
inline Contour contour_from_labels(const LabelFrame& labels, bool* interpolated = nullptr) {
  const int n = labels.rows();
  Contour c;
  c.radius.assign(n, 0.0);
  std::vector<bool> known(n, false);
  bool any_gap = false;
  for (int a = 0; a < n; ++a) {
    auto row = labels.row(a);
    int last = -1;
    for (int r = 0; r < labels.cols(); ++r)
      if (row[r] == code(Label::lumen)) last = r;
    if (last >= 0) {
      c[a] = last + 1;
      known[a] = true;
    } else {
      any_gap = true;
    }
  }
  if (interpolated) *interpolated = any_gap;
  std::vector<int> anchors;
  for (int a = 0; a < n; ++a)
    if (known[a]) anchors.push_back(a);
  if (anchors.empty() || !any_gap) return c;
  const int m = static_cast<int>(anchors.size());
  for (int k = 0; k < m; ++k) {
    const int a0 = anchors[k];
    const int a1 = anchors[(k + 1) % m];
    const int gap = wrap_index(a1 - a0, n) == 0 ? n : wrap_index(a1 - a0, n);
    for (int s = 1; s < gap; ++s) {
      const double f = static_cast<double>(s) / gap;
      c[wrap_index(a0 + s, n)] = (1 - f) * c[a0] + f * c[a1];
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Calcium
// ---------------------------------------------------------------------------

struct AlineCalcium {
  bool present = false;
  double thickness_mm = 0;  // longest contiguous radial calcium run
  double depth_mm = 0;      // inner calcium edge minus lumen boundary, >= 0
};

inline std::vector<AlineCalcium> calcium_per_aline(const LabelFrame& labels, const Contour& contour,
                                                   const Calibration& cal) {
  const int n = labels.rows();
  std::vector<AlineCalcium> out(n);
  const std::uint8_t ca = code(Label::calcium);
  for (int a = 0; a < n; ++a) {
    if (is_guidewire_aline(labels, a)) continue;
    auto row = labels.row(a);
    int first = -1, best = 0, run = 0;
    for (int r = 0; r < labels.cols(); ++r) {
      if (row[r] == ca) {
        if (first < 0) first = r;
        best = std::max(best, ++run);
      } else {
        run = 0;
      }
    }
    if (first < 0) continue;
    auto& q = out[a];
    q.present = true;
    q.thickness_mm = best * cal.r_pixel_mm();
    const double lum = contour.size() == n ? contour[a] : 0.0;
    q.depth_mm = std::max(0.0, (first - lum) * cal.r_pixel_mm());
  }
  return out;
}

/// Longest circular run of set entries after closing single-entry gaps.
inline int max_arc_alines(const std::vector<bool>& present) {
  const int n = static_cast<int>(present.size());
  if (n == 0) return 0;
  std::vector<bool> closed(present);
  for (int a = 0; a < n; ++a)
    if (!present[a] && present[wrap_index(a - 1, n)] && present[wrap_index(a + 1, n)])
      closed[a] = true;
  int start = -1;
  for (int a = 0; a < n; ++a)
    if (!closed[a]) {
      start = a;
      break;
    }
  if (start < 0) return n;
  int best = 0, run = 0;
  for (int k = 1; k <= n; ++k) {
    if (closed[wrap_index(start + k, n)]) {
      best = std::max(best, ++run);
    } else {
      run = 0;
    }
  }
  return best;
}

inline CalciumQuant calcium_quant(const LabelFrame& labels, const Contour& contour,
                                  const Calibration& cal) {
  CalciumQuant q;
  const auto per = calcium_per_aline(labels, contour, cal);
  std::vector<bool> present(per.size());
  for (std::size_t a = 0; a < per.size(); ++a) {
    present[a] = per[a].present;
    if (!per[a].present) continue;
    q.max_thickness_mm = std::max(q.max_thickness_mm.value_or(0.0), per[a].thickness_mm);
    q.min_depth_mm = std::min(q.min_depth_mm.value_or(std::numeric_limits<double>::infinity()),
                              per[a].depth_mm);
  }
  q.angle_deg = 360.0 * max_arc_alines(present) / std::max<std::size_t>(1, per.size());
  return q;
}

inline FrameQuant frame_quant(int frame, const LabelFrame& labels, const Calibration& cal) {
  FrameQuant fq;
  fq.frame = frame;
  bool interp = false;
  const Contour c = contour_from_labels(labels, &interp);
  fq.flags.guidewire_interpolated = interp;
  const auto lq = lumen_quant(c, cal);
  fq.lumen_area_mm2 = lq.area_mm2;
  fq.lumen_diam_max_mm = lq.diam_max_mm;
  fq.lumen_diam_min_mm = lq.diam_min_mm;
  fq.lumen_diam_mean_mm = lq.diam_mean_mm;
  const auto cq = calcium_quant(labels, c, cal);
  fq.calc_angle_deg = cq.angle_deg;
  fq.calc_max_thickness_mm = cq.max_thickness_mm;
  fq.calc_min_depth_mm = cq.min_depth_mm;
  return fq;
}

// ---------------------------------------------------------------------------
// Lesions and calcium score
// ---------------------------------------------------------------------------

/// +2 for angle, +1 for length, +1 for thickness above the configured thresholds.
inline int calcium_score(double max_angle_deg, double length_mm, double max_thickness_mm,
                         const ScoreThresholds& t = {}) {
  int s = 0;
  if (max_angle_deg > t.angle_deg) s += 2;
  if (length_mm > t.length_mm) s += 1;
  if (max_thickness_mm > t.thickness_mm) s += 1;
  return s;
}

inline int calcium_score(const LesionQuant& l, const ScoreThresholds& t = {}) {
  return calcium_score(l.max_angle_deg, l.length_mm, l.max_thickness_mm, t);
}

/// Lesions are maximal runs of gated frames; `frames[i]` pairs with `gate[i]`.
inline std::vector<LesionQuant> lesion_quant(const std::vector<FrameQuant>& frames,
                                             const std::vector<bool>& gate, const Calibration& cal,
                                             const ScoreThresholds& thresholds = {}) {
  std::vector<LesionQuant> out;
  const std::size_t n = std::min(frames.size(), gate.size());
  std::size_t i = 0;
  while (i < n) {
    if (!gate[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    LesionQuant l;
    l.first_frame = frames[i].frame;
    while (j < n && gate[j]) {
      const auto& f = frames[j];
      l.max_angle_deg = std::max(l.max_angle_deg, f.calc_angle_deg);
      if (f.calc_max_thickness_mm) l.max_thickness_mm = std::max(l.max_thickness_mm, *f.calc_max_thickness_mm);
      if (f.calc_min_depth_mm)
        l.min_depth_mm = std::min(l.min_depth_mm.value_or(std::numeric_limits<double>::infinity()),
                                  *f.calc_min_depth_mm);
      l.last_frame = f.frame;
      ++j;
    }
    l.length_mm = static_cast<double>(j - i) * cal.frame_spacing_mm;
    l.calcium_score = calcium_score(l, thresholds);
    out.push_back(l);
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// En face maps
// ---------------------------------------------------------------------------

constexpr float kEnFaceAbsent = -1.0f;

struct EnFaceMaps {
  Image<std::uint8_t> presence;  // frames x bins
  Image<float> thickness_mm;     // kEnFaceAbsent where presence is 0
  Image<float> depth_mm;
};

inline EnFaceMaps enface_maps(const LabelVolume& labels, const std::vector<Contour>& contours,
                              const Calibration& cal, int angular_bins) {
  if (angular_bins <= 0) throw InvalidArgument("angular_bins must be > 0");
  const int nf = labels.n_frames();
  EnFaceMaps m{Image<std::uint8_t>(nf, angular_bins, 0), Image<float>(nf, angular_bins, kEnFaceAbsent),
               Image<float>(nf, angular_bins, kEnFaceAbsent)};
  for (int f = 0; f < nf; ++f) {
    const Contour c = f < static_cast<int>(contours.size()) ? contours[f]
                                                            : contour_from_labels(labels.frames[f]);
    const auto per = calcium_per_aline(labels.frames[f], c, cal);
    const int n = static_cast<int>(per.size());
    for (int a = 0; a < n; ++a) {
      if (!per[a].present) continue;
      const int b = static_cast<int>(static_cast<long long>(a) * angular_bins / n);
      const float th = static_cast<float>(per[a].thickness_mm);
      const float dp = static_cast<float>(per[a].depth_mm);
      if (!m.presence(f, b)) {
        m.presence(f, b) = 1;
        m.thickness_mm(f, b) = th;
        m.depth_mm(f, b) = dp;
      } else {
        m.thickness_mm(f, b) = std::max(m.thickness_mm(f, b), th);
        m.depth_mm(f, b) = std::min(m.depth_mm(f, b), dp);
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Longitudinal view
// ---------------------------------------------------------------------------

struct LongitudinalView {
  Image<std::uint16_t> image;  // frames x (2 * n_r), catheter at the centre column
  Image<std::uint8_t> labels;  // same layout; empty when no labels supplied
};

/// Row f holds the A-line opposite the projection angle (reversed, outermost
/// sample first) followed by the A-line at the projection angle.
inline LongitudinalView longitudinal_view(const Pullback& pb, const LabelVolume* labels, double angle_deg) {
  if (!std::isfinite(angle_deg)) throw InvalidArgument("projection angle must be finite");
  const int n_r = pb.n_r;
  const int fwd = aline_for_angle(angle_deg, pb.n_alines);
  const int back = aline_for_angle(angle_deg + 180.0, pb.n_alines);
  LongitudinalView v{Image<std::uint16_t>(pb.n_frames(), 2 * n_r),
                     labels ? Image<std::uint8_t>(pb.n_frames(), 2 * n_r) : Image<std::uint8_t>()};
  for (int f = 0; f < pb.n_frames(); ++f) {
    for (int r = 0; r < n_r; ++r) {
      v.image(f, n_r - 1 - r) = pb.frames[f](back, r);
      v.image(f, n_r + r) = pb.frames[f](fwd, r);
      if (labels) {
        v.labels(f, n_r - 1 - r) = labels->frames[f](back, r);
        v.labels(f, n_r + r) = labels->frames[f](fwd, r);
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Manual measurements
// ---------------------------------------------------------------------------

/// Angle in degrees, in [0, 180], between rays vertex->a and vertex->b.
inline double measure_angle(Point2 vertex, Point2 a, Point2 b) {
  const double ax = a.x - vertex.x, ay = a.y - vertex.y;
  const double bx = b.x - vertex.x, by = b.y - vertex.y;
  const double na = std::hypot(ax, ay), nb = std::hypot(bx, by);
  if (na == 0 || nb == 0) throw InvalidArgument("degenerate ray");
  const double c = std::clamp((ax * bx + ay * by) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

/// Cross-sectional distance in mm between two points given in radial-pixel units.
inline double measure_length(Point2 a, Point2 b, const Calibration& cal) {
  return distance(a, b) * cal.r_pixel_mm();
}

/// Longitudinal length in mm between two frames (en face / longitudinal views).
inline double measure_frame_span(int frame_a, int frame_b, const Calibration& cal) {
  return std::abs(frame_b - frame_a) * cal.frame_spacing_mm;
}

}  // namespace octopus::quant
