#pragma once

// Synthetic pullbacks with exact ground truth.
//
// Appearance model: a dark lumen, tissue that is bright at the lumen border and
// attenuates exponentially with depth, calcium as a signal-poor region framed
// by thin bright borders, stent struts as a short bright bloom followed by a
// zero-intensity shadow, and the guidewire as a bright arc followed by a zero
// shadow. Speckle is multiplicative: v *= (1 - k) + k * Exp(1), k = noise / 2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "octopus/core.hpp"
#include "octopus/parallel.hpp"
#include "octopus/quant.hpp"

namespace octopus::phantom {

struct LumenShape {
  double a_mm = 1.5;  // semi-axis along the rotated x axis
  double b_mm = 1.5;
  double rotation_deg = 0;
  double cx_mm = 0;  // lumen centre relative to the catheter
  double cy_mm = 0;
};

struct GuidewireSpec {
  double center_deg = 180;
  double width_deg = 20;
  std::optional<double> center_end_deg;  // linear drift to this centre on the last frame
  double radius_mm = 0.35;
};

struct CalciumLesionSpec {
  int first_frame = 0;
  int last_frame = 0;
  double center_deg = 0;
  double arc_deg = 90;
  double depth_mm = 0.1;
  double thickness_mm = 0.5;
};

/// offset_mm > 0 floats the strut centre that far toward the catheter
/// (malapposed). offset_mm < 0 embeds it; the overlying tissue then equals
/// -offset_mm and is reported as coverage_mm.
struct StrutSpec {
  int frame = 0;
  double angle_deg = 0;
  double offset_mm = 0;
  double coverage_mm = 0;
};

struct IntensityModel {
  double lumen = 300;
  double tissue = 12000;
  double attenuation_per_mm = 1.0;
  double floor = 150;
  double calcium_ratio = 0.15;
  double border_ratio = 2.0;
  int border_px = 2;
  double bloom = 42000;
  int bloom_px = 5;
  double strut_width_mm = 0.1;
  double guidewire = 50000;
  int guidewire_px = 8;
};

struct PhantomSpec {
  std::string id = "phantom";
  int n_frames = 40;
  int n_alines = kDefaultAlines;
  int n_r = kDefaultRadial;
  double r_pixel_um = 5.0;
  double frame_spacing_mm = 0.2;
  LumenShape lumen;
  std::optional<LumenShape> lumen_end;  // linear morph towards this shape
  std::optional<GuidewireSpec> guidewire;
  std::vector<CalciumLesionSpec> calcium;
  std::vector<StrutSpec> struts;
  double noise = 0;
  IntensityModel intensity;
};

struct StrutTruth {
  int frame = 0;
  int aline = 0;        // centre A-line
  int first_aline = 0;  // angular extent, may wrap
  int width_alines = 0;
  double center_px = 0;  // radial index of the strut centre
  int lead_px = 0;       // first bloom sample
  bool covered = false;
  double coverage_um = 0;
  double malapposition_um = 0;  // distance to the boundary when luminal, else 0
  bool occluded = false;        // overlaps the guidewire shadow, not rendered
};

using GuidewireTruth = AngularBand;

struct GroundTruth {
  LabelVolume labels;
  std::vector<Contour> lumen;
  std::vector<std::optional<GuidewireTruth>> guidewire;
  std::vector<StrutTruth> struts;
  std::vector<quant::FrameQuant> frame_quant;
  std::vector<bool> calcium_frames;
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

using nlohmann::json;

namespace detail {
template <typename T>
void get_opt(const json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}
}  // namespace detail

inline void to_json(json& j, const LumenShape& s) {
  j = json{{"a_mm", s.a_mm}, {"b_mm", s.b_mm}, {"rotation_deg", s.rotation_deg},
           {"cx_mm", s.cx_mm}, {"cy_mm", s.cy_mm}};
}
inline void from_json(const json& j, LumenShape& s) {
  detail::get_opt(j, "a_mm", s.a_mm);
  detail::get_opt(j, "b_mm", s.b_mm);
  detail::get_opt(j, "rotation_deg", s.rotation_deg);
  detail::get_opt(j, "cx_mm", s.cx_mm);
  detail::get_opt(j, "cy_mm", s.cy_mm);
}
inline void to_json(json& j, const GuidewireSpec& s) {
  j = json{{"center_deg", s.center_deg}, {"width_deg", s.width_deg}, {"radius_mm", s.radius_mm}};
  if (s.center_end_deg) j["center_end_deg"] = *s.center_end_deg;
}
inline void from_json(const json& j, GuidewireSpec& s) {
  detail::get_opt(j, "center_deg", s.center_deg);
  detail::get_opt(j, "width_deg", s.width_deg);
  detail::get_opt(j, "radius_mm", s.radius_mm);
  if (j.contains("center_end_deg") && !j.at("center_end_deg").is_null())
    s.center_end_deg = j.at("center_end_deg").get<double>();
}
inline void to_json(json& j, const CalciumLesionSpec& s) {
  j = json{{"first_frame", s.first_frame}, {"last_frame", s.last_frame}, {"center_deg", s.center_deg},
           {"arc_deg", s.arc_deg}, {"depth_mm", s.depth_mm}, {"thickness_mm", s.thickness_mm}};
}
inline void from_json(const json& j, CalciumLesionSpec& s) {
  detail::get_opt(j, "first_frame", s.first_frame);
  detail::get_opt(j, "last_frame", s.last_frame);
  detail::get_opt(j, "center_deg", s.center_deg);
  detail::get_opt(j, "arc_deg", s.arc_deg);
  detail::get_opt(j, "depth_mm", s.depth_mm);
  detail::get_opt(j, "thickness_mm", s.thickness_mm);
}
inline void to_json(json& j, const StrutSpec& s) {
  j = json{{"frame", s.frame}, {"angle_deg", s.angle_deg}, {"offset_mm", s.offset_mm},
           {"coverage_mm", s.coverage_mm}};
}
inline void from_json(const json& j, StrutSpec& s) {
  detail::get_opt(j, "frame", s.frame);
  detail::get_opt(j, "angle_deg", s.angle_deg);
  detail::get_opt(j, "offset_mm", s.offset_mm);
  detail::get_opt(j, "coverage_mm", s.coverage_mm);
}
inline void to_json(json& j, const IntensityModel& m) {
  j = json{{"lumen", m.lumen},
           {"tissue", m.tissue},
           {"attenuation_per_mm", m.attenuation_per_mm},
           {"floor", m.floor},
           {"calcium_ratio", m.calcium_ratio},
           {"border_ratio", m.border_ratio},
           {"border_px", m.border_px},
           {"bloom", m.bloom},
           {"bloom_px", m.bloom_px},
           {"strut_width_mm", m.strut_width_mm},
           {"guidewire", m.guidewire},
           {"guidewire_px", m.guidewire_px}};
}
inline void from_json(const json& j, IntensityModel& m) {
  detail::get_opt(j, "lumen", m.lumen);
  detail::get_opt(j, "tissue", m.tissue);
  detail::get_opt(j, "attenuation_per_mm", m.attenuation_per_mm);
  detail::get_opt(j, "floor", m.floor);
  detail::get_opt(j, "calcium_ratio", m.calcium_ratio);
  detail::get_opt(j, "border_ratio", m.border_ratio);
  detail::get_opt(j, "border_px", m.border_px);
  detail::get_opt(j, "bloom", m.bloom);
  detail::get_opt(j, "bloom_px", m.bloom_px);
  detail::get_opt(j, "strut_width_mm", m.strut_width_mm);
  detail::get_opt(j, "guidewire", m.guidewire);
  detail::get_opt(j, "guidewire_px", m.guidewire_px);
}
inline void to_json(json& j, const PhantomSpec& s) {
  j = json{{"id", s.id},
           {"n_frames", s.n_frames},
           {"n_alines", s.n_alines},
           {"n_r", s.n_r},
           {"r_pixel_um", s.r_pixel_um},
           {"frame_spacing_mm", s.frame_spacing_mm},
           {"lumen", s.lumen},
           {"calcium", s.calcium},
           {"struts", s.struts},
           {"noise", s.noise},
           {"intensity", s.intensity}};
  if (s.lumen_end) j["lumen_end"] = *s.lumen_end;
  if (s.guidewire) j["guidewire"] = *s.guidewire;
}
inline void from_json(const json& j, PhantomSpec& s) {
  detail::get_opt(j, "id", s.id);
  detail::get_opt(j, "n_frames", s.n_frames);
  detail::get_opt(j, "n_alines", s.n_alines);
  detail::get_opt(j, "n_r", s.n_r);
  detail::get_opt(j, "r_pixel_um", s.r_pixel_um);
  detail::get_opt(j, "frame_spacing_mm", s.frame_spacing_mm);
  detail::get_opt(j, "lumen", s.lumen);
  if (j.contains("lumen_end") && !j.at("lumen_end").is_null()) s.lumen_end = j.at("lumen_end").get<LumenShape>();
  if (j.contains("guidewire") && !j.at("guidewire").is_null())
    s.guidewire = j.at("guidewire").get<GuidewireSpec>();
  detail::get_opt(j, "calcium", s.calcium);
  detail::get_opt(j, "struts", s.struts);
  detail::get_opt(j, "noise", s.noise);
  detail::get_opt(j, "intensity", s.intensity);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline LumenShape lumen_at(const PhantomSpec& spec, int frame) {
  if (!spec.lumen_end || spec.n_frames <= 1) return spec.lumen;
  const double t = static_cast<double>(frame) / (spec.n_frames - 1);
  const auto& a = spec.lumen;
  const auto& b = *spec.lumen_end;
  auto mix = [t](double x, double y) { return (1 - t) * x + t * y; };
  return {mix(a.a_mm, b.a_mm), mix(a.b_mm, b.b_mm), mix(a.rotation_deg, b.rotation_deg),
          mix(a.cx_mm, b.cx_mm), mix(a.cy_mm, b.cy_mm)};
}

/// Distance in mm from the catheter to the lumen ellipse along direction theta.
/// Returns a negative value when the catheter lies outside the ellipse.
inline double ray_ellipse_mm(const LumenShape& s, double theta) {
  const double phi = s.rotation_deg * std::numbers::pi / 180.0;
  const double cp = std::cos(-phi), sp = std::sin(-phi);
  const double ux = std::cos(theta), uy = std::sin(theta);
  const double urx = cp * ux - sp * uy, ury = sp * ux + cp * uy;
  const double crx = cp * s.cx_mm - sp * s.cy_mm, cry = sp * s.cx_mm + cp * s.cy_mm;
  const double a2 = s.a_mm * s.a_mm, b2 = s.b_mm * s.b_mm;
  const double A = urx * urx / a2 + ury * ury / b2;
  const double B = -2 * (urx * crx / a2 + ury * cry / b2);
  const double C = crx * crx / a2 + cry * cry / b2 - 1;
  if (C >= 0) return -1;
  return (-B + std::sqrt(B * B - 4 * A * C)) / (2 * A);
}

inline Contour true_lumen(const PhantomSpec& spec, int frame) {
  const auto shape = lumen_at(spec, frame);
  Contour c;
  c.radius.resize(spec.n_alines);
  for (int a = 0; a < spec.n_alines; ++a) {
    const double mm = ray_ellipse_mm(shape, aline_angle_rad(a, spec.n_alines));
    c[a] = mm < 0 ? -1 : std::round(mm * 1000.0 / spec.r_pixel_um);
  }
  return c;
}

/// Angular distance in degrees, in [0, 180].
inline double angular_gap_deg(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180 ? 360 - d : d;
}

inline std::vector<bool> arc_alines(double center_deg, double arc_deg, int n_alines) {
  std::vector<bool> in(n_alines, false);
  const double tol = 1e-9;
  for (int a = 0; a < n_alines; ++a)
    in[a] = arc_deg >= 360.0 ||
            angular_gap_deg(aline_angle_deg(a, n_alines), center_deg) <= arc_deg / 2 + tol;
  return in;
}

inline double guidewire_center_at(const GuidewireSpec& g, int frame, int n_frames) {
  if (!g.center_end_deg || n_frames <= 1) return g.center_deg;
  const double t = static_cast<double>(frame) / (n_frames - 1);
  return (1 - t) * g.center_deg + t * *g.center_end_deg;
}

inline std::optional<GuidewireTruth> band_from_mask(const std::vector<bool>& in) {
  const int n = static_cast<int>(in.size());
  int count = 0;
  for (bool b : in) count += b;
  if (count == 0) return std::nullopt;
  for (int a = 0; a < n; ++a)
    if (in[a] && !in[wrap_index(a - 1, n)]) return GuidewireTruth{a, wrap_index(a + count - 1, n)};
  return GuidewireTruth{0, n - 1};
}

/// A-lines covered by a strut of the given physical width at radius_px.
inline int strut_width_alines(double width_mm, double radius_px, double r_pixel_um, int n_alines) {
  const double radius_mm = std::max(radius_px, 1.0) * r_pixel_um / 1000.0;
  const double per_aline_mm = radius_mm * 2 * std::numbers::pi / n_alines;
  int w = static_cast<int>(std::lround(width_mm / per_aline_mm));
  w = std::max(w, 3);
  if (w % 2 == 0) ++w;
  return w;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate(const PhantomSpec& s) {
  auto fail = [](const std::string& path, const std::string& why) {
    throw SpecInvalid(path + ": " + why);
  };
  if (s.n_frames < 1) fail("n_frames", "must be >= 1");
  if (s.n_alines < kMinAlines) fail("n_alines", "must be >= 8");
  if (s.n_r < kMinRadial) fail("n_r", "must be >= 300");
  if (!(s.r_pixel_um > 0)) fail("r_pixel_um", "must be > 0");
  if (!(s.frame_spacing_mm > 0)) fail("frame_spacing_mm", "must be > 0");
  if (!(s.noise >= 0)) fail("noise", "must be >= 0");
  auto check_shape = [&](const LumenShape& l, const std::string& path) {
    if (!(l.a_mm > 0)) fail(path + ".a_mm", "must be > 0");
    if (!(l.b_mm > 0)) fail(path + ".b_mm", "must be > 0");
  };
  check_shape(s.lumen, "lumen");
  if (s.lumen_end) check_shape(*s.lumen_end, "lumen_end");
  const int max_lumen_px = s.n_r - 300;
  double min_lumen_px = 1e300;
  for (int f = 0; f < s.n_frames; ++f) {
    const auto c = true_lumen(s, f);
    for (double r : c.radius) {
      if (r <= 0) fail("lumen", "catheter must lie inside the lumen");
      if (r >= max_lumen_px) fail("lumen", "radius must stay below n_r - 300 pixels");
      min_lumen_px = std::min(min_lumen_px, r);
    }
  }
  if (s.guidewire) {
    const auto& g = *s.guidewire;
    if (!(g.width_deg > 0 && g.width_deg < 180)) fail("guidewire.width_deg", "must be in (0, 180)");
    const double wire_px = g.radius_mm * 1000 / s.r_pixel_um;
    if (!(wire_px > 0) || wire_px + s.intensity.guidewire_px >= min_lumen_px)
      fail("guidewire.radius_mm", "guidewire must sit inside the lumen");
  }
  for (std::size_t i = 0; i < s.calcium.size(); ++i) {
    const auto& c = s.calcium[i];
    const std::string p = "calcium[" + std::to_string(i) + "]";
    if (c.first_frame < 0 || c.last_frame >= s.n_frames || c.first_frame > c.last_frame)
      fail(p + ".frames", "frame range outside pullback");
    if (!(c.arc_deg > 0 && c.arc_deg <= 360)) fail(p + ".arc_deg", "must be in (0, 360]");
    if (!(c.depth_mm >= 0)) fail(p + ".depth_mm", "must be >= 0");
    if (!(c.thickness_mm > 0)) fail(p + ".thickness_mm", "must be > 0");
    const double end_px = (c.depth_mm + c.thickness_mm) * 1000 / s.r_pixel_um + s.intensity.border_px;
    if (end_px >= 300) fail(p, "lesion must end within the 300-pixel analysis depth");
  }
  for (std::size_t i = 0; i < s.struts.size(); ++i) {
    const auto& t = s.struts[i];
    const std::string p = "struts[" + std::to_string(i) + "]";
    if (t.frame < 0 || t.frame >= s.n_frames) fail(p + ".frame", "outside pullback");
    if (t.coverage_mm < 0) fail(p + ".coverage_mm", "must be >= 0");
    if (t.offset_mm > 0 && t.coverage_mm > 0) fail(p, "a malapposed strut cannot be covered");
    if (t.offset_mm < 0 && t.coverage_mm > 0 && std::abs(t.coverage_mm + t.offset_mm) > 1e-9)
      fail(p, "coverage_mm must equal -offset_mm for an embedded strut");
    if (t.offset_mm > 0 && t.offset_mm * 1000 / s.r_pixel_um + s.intensity.bloom_px >= min_lumen_px)
      fail(p + ".offset_mm", "strut would cross the catheter");
  }
  if (s.intensity.bloom_px < 1 || s.intensity.border_px < 0 || s.intensity.guidewire_px < 1)
    fail("intensity", "pixel extents must be positive");
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

struct StrutGeometry {
  StrutTruth truth;
  std::vector<int> alines;
};

inline StrutGeometry strut_geometry(const PhantomSpec& s, const StrutSpec& st, const Contour& lumen) {
  const double px_um = s.r_pixel_um;
  const int n = s.n_alines;
  const int half_bloom = s.intensity.bloom_px / 2;
  StrutGeometry g;
  auto& t = g.truth;
  t.frame = st.frame;
  t.aline = aline_for_angle(st.angle_deg, n);
  const int b = static_cast<int>(lumen[t.aline]);
  const double coverage_mm = st.offset_mm < 0 ? -st.offset_mm : st.coverage_mm;
  if (st.offset_mm > 0) {
    const int off = static_cast<int>(std::lround(st.offset_mm * 1000 / px_um));
    t.lead_px = b - off - half_bloom;
  } else {
    const int cov = static_cast<int>(std::lround(coverage_mm * 1000 / px_um));
    t.lead_px = b + cov;
    t.covered = cov > 0;
    t.coverage_um = cov * px_um;
  }
  t.center_px = t.lead_px + half_bloom;
  t.width_alines = strut_width_alines(s.intensity.strut_width_mm, t.center_px, px_um, n);
  t.first_aline = wrap_index(t.aline - t.width_alines / 2, n);
  for (int k = 0; k < t.width_alines; ++k) g.alines.push_back(wrap_index(t.first_aline + k, n));
  if (t.center_px < b) {
    const Point2 centre = polar_point(t.center_px, t.aline, n);
    double best = 1e300;
    for (int a = 0; a < n; ++a) best = std::min(best, distance(centre, polar_point(lumen[a], a, n)));
    t.malapposition_um = best * px_um;
  }
  return g;
}

inline double speckle(std::mt19937_64& rng, double k) {
  if (k <= 0) return 1.0;
  std::exponential_distribution<double> e(1.0);
  return (1 - k) + k * e(rng);
}

inline std::uint16_t to_u16(double v) {
  return static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
}

}  // namespace detail

struct Phantom {
  Pullback pullback;
  GroundTruth truth;
};

inline Phantom generate(const PhantomSpec& spec, std::uint64_t seed) {
  validate(spec);
  const int nf = spec.n_frames, n = spec.n_alines, n_r = spec.n_r;
  const auto& im = spec.intensity;
  const double px_mm = spec.r_pixel_um / 1000.0;
  const double k = std::min(1.0, spec.noise / 2.0);

  Phantom ph;
  ph.pullback = make_pullback(spec.id, nf, n, n_r, {spec.r_pixel_um, spec.frame_spacing_mm, 0});
  auto& gt = ph.truth;
  gt.labels = LabelVolume(nf, n, n_r);
  gt.lumen.resize(nf);
  gt.guidewire.resize(nf);
  gt.frame_quant.resize(nf);
  gt.calcium_frames.assign(nf, false);

  std::vector<std::vector<detail::StrutGeometry>> struts(nf);
  for (int f = 0; f < nf; ++f) gt.lumen[f] = true_lumen(spec, f);
  for (const auto& st : spec.struts) struts[st.frame].push_back(detail::strut_geometry(spec, st, gt.lumen[st.frame]));

  parallel_for(nf, [&](int f) {
    const Contour& lumen = gt.lumen[f];
    std::vector<bool> gw(n, false);
    if (spec.guidewire)
      gw = arc_alines(guidewire_center_at(*spec.guidewire, f, nf), spec.guidewire->width_deg, n);
    gt.guidewire[f] = band_from_mask(gw);

    // Calcium span per A-line: [inner, outer) radial indices; several lesions may stack.
    std::vector<std::vector<std::pair<int, int>>> calc(n);
    for (const auto& c : spec.calcium) {
      if (f < c.first_frame || f > c.last_frame) continue;
      const auto arc = arc_alines(c.center_deg, c.arc_deg, n);
      const int d = static_cast<int>(std::lround(c.depth_mm / px_mm));
      const int t = static_cast<int>(std::lround(c.thickness_mm / px_mm));
      for (int a = 0; a < n; ++a)
        if (arc[a]) calc[a].emplace_back(static_cast<int>(lumen[a]) + d, static_cast<int>(lumen[a]) + d + t);
    }

    std::vector<const StrutTruth*> strut_on(n, nullptr);
    for (const auto& sg : struts[f])
      for (int a : sg.alines) strut_on[a] = &sg.truth;

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(f), 0x0c70u};
    std::mt19937_64 rng(seq);
    auto& frame = ph.pullback.frames[f];
    auto& lab = gt.labels.frames[f];
    const int wire_px = spec.guidewire ? static_cast<int>(std::lround(spec.guidewire->radius_mm / px_mm)) : 0;

    for (int a = 0; a < n; ++a) {
      auto px = frame.row(a);
      auto lb = lab.row(a);
      const int b = static_cast<int>(lumen[a]);
      if (gw[a]) {
        for (int r = 0; r < n_r; ++r) {
          double v = 0;
          if (r < wire_px) v = im.lumen;
          else if (r < wire_px + im.guidewire_px) v = im.guidewire;
          px[r] = detail::to_u16(v * detail::speckle(rng, k));
          lb[r] = code(Label::guidewire);
        }
        continue;
      }
      const StrutTruth* st = strut_on[a];
      for (int r = 0; r < n_r; ++r) {
        double v;
        std::uint8_t l = code(Label::background);
        if (r < b) {
          v = im.lumen;
          l = code(Label::lumen);
        } else {
          const double depth_mm = (r - b) * px_mm;
          v = im.tissue * std::exp(-im.attenuation_per_mm * depth_mm) + im.floor;
          for (auto [lo, hi] : calc[a]) {
            if (r >= lo && r < hi) {
              v *= im.calcium_ratio;
              l = code(Label::calcium);
            } else if ((r >= lo - im.border_px && r < lo && r >= b) || (r >= hi && r < hi + im.border_px)) {
              v *= im.border_ratio;
            }
          }
        }
        if (st) {
          if (r >= st->lead_px && r < st->lead_px + im.bloom_px) v = im.bloom;
          else if (r >= st->lead_px + im.bloom_px) v = 0;
        }
        px[r] = detail::to_u16(v * detail::speckle(rng, k));
        lb[r] = l;
      }
    }
  });

  for (int f = 0; f < nf; ++f) {
    for (auto& g : struts[f]) {
      if (spec.guidewire) {
        const auto gw = arc_alines(guidewire_center_at(*spec.guidewire, f, nf), spec.guidewire->width_deg, n);
        for (int a : g.alines) g.truth.occluded = g.truth.occluded || gw[a];
      }
      gt.struts.push_back(g.truth);
    }
  }
  const Calibration& cal = ph.pullback.calibration;
  for (int f = 0; f < nf; ++f) {
    auto fq = quant::frame_quant(f, gt.labels.frames[f], cal);
    gt.calcium_frames[f] = fq.calc_max_thickness_mm.has_value();
    fq.gated = gt.calcium_frames[f];
    gt.frame_quant[f] = fq;
  }
  return ph;
}

// ---------------------------------------------------------------------------
// Perturbations
// ---------------------------------------------------------------------------

struct FrameShift {
  int frames = 0;
};
struct IntensityScale {
  double factor = 1.0;
};
struct AngularRoll {
  int alines = 0;
};
using Perturbation = std::variant<FrameShift, IntensityScale, AngularRoll>;

/// FrameShift k: out[f] = in[f - k], zero frames where undefined.
/// AngularRoll a: out row i = in row (i - a) mod n_alines.
inline Pullback perturb(const Pullback& pb, const Perturbation& p) {
  Pullback out = pb;
  if (const auto* fs = std::get_if<FrameShift>(&p)) {
    for (int f = 0; f < pb.n_frames(); ++f) {
      const int src = f - fs->frames;
      out.frames[f] = (src >= 0 && src < pb.n_frames()) ? pb.frames[src] : PolarFrame(pb.n_alines, pb.n_r);
    }
  } else if (const auto* is = std::get_if<IntensityScale>(&p)) {
    for (auto& fr : out.frames)
      for (auto& v : fr.data()) v = detail::to_u16(v * is->factor);
  } else if (const auto* ar = std::get_if<AngularRoll>(&p)) {
    for (int f = 0; f < pb.n_frames(); ++f)
      for (int a = 0; a < pb.n_alines; ++a) {
        auto src = pb.frames[f].row(wrap_index(a - ar->alines, pb.n_alines));
        std::copy(src.begin(), src.end(), out.frames[f].row(a).begin());
      }
  }
  return out;
}

/// Same frame shift applied to a label volume.
inline LabelVolume shift_frames(const LabelVolume& in, int k) {
  LabelVolume out = in;
  for (int f = 0; f < in.n_frames(); ++f) {
    const int src = f - k;
    out.frames[f] = (src >= 0 && src < in.n_frames()) ? in.frames[src] : LabelFrame(in.n_alines, in.n_r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Randomised corpora
// ---------------------------------------------------------------------------

struct CorpusOptions {
  int n_frames = 40;
  int n_alines = kDefaultAlines;
  int n_r = kDefaultRadial;
  double noise = 1.0;
  bool guidewire = true;
  int max_lesions = 3;
  bool stent = false;
  int struts_per_frame = 8;
};

/// Randomised plaque/stent phantom. Deterministic in (seed, options).
inline PhantomSpec random_spec(std::uint64_t seed, const CorpusOptions& o = {}) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 17);
  auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto I = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  PhantomSpec s;
  s.id = "phantom-" + std::to_string(seed);
  s.n_frames = o.n_frames;
  s.n_alines = o.n_alines;
  s.n_r = o.n_r;
  s.noise = o.noise;
  const double max_mm = (o.n_r - 320) * s.r_pixel_um / 1000.0;
  auto shape = [&] {
    LumenShape l;
    const double base = U(1.1, std::min(1.9, max_mm - 0.35));
    const double ecc = U(0.8, 1.0);
    l.a_mm = base;
    l.b_mm = base * ecc;
    l.rotation_deg = U(0, 180);
    l.cx_mm = U(-0.2, 0.2);
    l.cy_mm = U(-0.2, 0.2);
    return l;
  };
  s.lumen = shape();
  if (U(0, 1) < 0.5) s.lumen_end = shape();
  if (o.guidewire) {
    GuidewireSpec g;
    g.center_deg = U(0, 360);
    g.width_deg = U(14, 28);
    if (U(0, 1) < 0.5) g.center_end_deg = g.center_deg + U(-10, 10);
    g.radius_mm = U(0.3, 0.5);
    s.guidewire = g;
  }
  const int lesions = o.max_lesions > 0 ? I(1, o.max_lesions) : 0;
  for (int i = 0; i < lesions; ++i) {
    CalciumLesionSpec c;
    const int len = I(std::max(3, s.n_frames / 8), std::max(4, s.n_frames / 3));
    c.first_frame = I(0, std::max(0, s.n_frames - len));
    c.last_frame = std::min(s.n_frames - 1, c.first_frame + len - 1);
    c.center_deg = U(0, 360);
    c.arc_deg = U(40, 200);
    c.depth_mm = U(0.03, 0.3);
    c.thickness_mm = U(0.25, 0.9);
    s.calcium.push_back(c);
  }
  if (o.stent) {
    for (int f = 0; f < s.n_frames; ++f) {
      const double phase = U(0, 360);
      for (int k = 0; k < o.struts_per_frame; ++k) {
        StrutSpec st;
        st.frame = f;
        st.angle_deg = std::fmod(phase + 360.0 * k / o.struts_per_frame + U(-8, 8), 360.0);
        const double kind = U(0, 1);
        if (kind < 0.55) {
          st.coverage_mm = U(0.03, 0.25);
          st.offset_mm = -st.coverage_mm;
        } else if (kind < 0.8) {
          st.offset_mm = 0;
        } else {
          st.offset_mm = U(0.05, 0.5);
        }
        s.struts.push_back(st);
      }
    }
  }
  return s;
}

}  // namespace octopus::phantom
