#pragma once

// Pullback co-registration at frame granularity: landmark pairs, or
// normalised cross-correlation of maximum calcium thickness curves.
// Convention: frame_ref = frame_float + offset.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "octopus/core.hpp"

namespace octopus::registration {

struct ThicknessSignal {
  std::string source;
  std::vector<double> mm;  // per frame
};

/// Per frame, the longest contiguous radial calcium run over all A-lines.
inline ThicknessSignal thickness_signal(const LabelVolume& labels, const Calibration& cal, std::string source = {}) {
  ThicknessSignal s;
  s.source = std::move(source);
  s.mm.assign(labels.n_frames(), 0.0);
  const auto calcium = code(Label::calcium);
  for (int f = 0; f < labels.n_frames(); ++f) {
    int best = 0;
    const auto& fr = labels.frames[f];
    for (int a = 0; a < fr.rows(); ++a) {
      int run = 0;
      for (auto v : fr.row(a)) {
        run = v == calcium ? run + 1 : 0;
        best = std::max(best, run);
      }
    }
    s.mm[f] = best * cal.r_pixel_mm();
  }
  return s;
}

enum class Mode { automatic, landmark };

struct RegistrationResult {
  int offset = 0;
  std::optional<double> peak_correlation;  // automatic mode only
  Mode mode = Mode::automatic;
  std::vector<std::string> warnings;
  int n_ref = 0;
  int n_float = 0;

  /// Reference frame for a floating frame, or -1 outside the reference.
  int map(int float_frame) const {
    const int r = float_frame + offset;
    return r >= 0 && r < n_ref ? r : -1;
  }
};

struct AutoOptions {
  int max_offset = -1;  // < 0: half the shorter signal
  int min_overlap = 25;
};

namespace detail {

inline double variance(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double m = 0, s = 0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) s += (x - m) * (x - m);
  return s / v.size();
}

/// Zero-mean, unit-variance correlation over the overlap; nullopt when the
/// overlap is too short or flat.
inline std::optional<double> ncc_at(const std::vector<double>& ref, const std::vector<double>& flt, int offset,
                                    int min_overlap) {
  const int nr = static_cast<int>(ref.size()), nf = static_cast<int>(flt.size());
  const int f0 = std::max(0, -offset), f1 = std::min(nf, nr - offset);
  const int len = f1 - f0;
  if (len < min_overlap || len <= 1) return std::nullopt;
  double mr = 0, mf = 0;
  for (int f = f0; f < f1; ++f) {
    mr += ref[f + offset];
    mf += flt[f];
  }
  mr /= len;
  mf /= len;
  double sxy = 0, sxx = 0, syy = 0;
  for (int f = f0; f < f1; ++f) {
    const double x = ref[f + offset] - mr, y = flt[f] - mf;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  if (sxx <= 1e-18 || syy <= 1e-18) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

inline RegistrationResult register_auto(const ThicknessSignal& ref, const ThicknessSignal& flt,
                                        const AutoOptions& opt = {}) {
  if (detail::variance(ref.mm) <= 1e-18) throw DegenerateSignal("reference thickness signal is constant");
  if (detail::variance(flt.mm) <= 1e-18) throw DegenerateSignal("floating thickness signal is constant");
  const int nr = static_cast<int>(ref.mm.size()), nf = static_cast<int>(flt.mm.size());
  const int max_off = opt.max_offset >= 0 ? opt.max_offset : std::min(nr, nf) / 2;
  std::optional<double> best;
  int best_off = 0;
  for (int o = -max_off; o <= max_off; ++o) {
    const auto c = detail::ncc_at(ref.mm, flt.mm, o, opt.min_overlap);
    if (!c) continue;
    const bool better = !best || *c > *best + 1e-12 ||
                        (std::abs(*c - *best) <= 1e-12 &&
                         (std::abs(o) < std::abs(best_off) || (std::abs(o) == std::abs(best_off) && o < best_off)));
    if (better) {
      best = c;
      best_off = o;
    }
  }
  if (!best) throw DegenerateSignal("no offset leaves a usable overlap");
  RegistrationResult r;
  r.offset = best_off;
  r.peak_correlation = *best;
  r.mode = Mode::automatic;
  r.n_ref = nr;
  r.n_float = nf;
  return r;
}

/// Two landmark pairs (ref_frames[i] <-> float_frames[i]).
inline RegistrationResult register_landmark(std::pair<int, int> ref_frames, std::pair<int, int> float_frames,
                                            int n_ref = 0, int n_float = 0) {
  const auto [r1, r2] = ref_frames;
  const auto [f1, f2] = float_frames;
  if (r1 == r2 || f1 == f2 || (r1 < r2) != (f1 < f2))
    throw InvalidLandmarks("landmark pairs must be distinct and in the same order in both pullbacks");
  if (r1 < 0 || r2 < 0 || f1 < 0 || f2 < 0 || (n_ref > 0 && std::max(r1, r2) >= n_ref) ||
      (n_float > 0 && std::max(f1, f2) >= n_float))
    throw InvalidLandmarks("landmark frame outside the pullback");
  const int o1 = r1 - f1, o2 = r2 - f2;
  RegistrationResult r;
  r.mode = Mode::landmark;
  r.n_ref = n_ref;
  r.n_float = n_float;
  // Half away from zero: 14.5 -> 15, -14.5 -> -15.
  r.offset = static_cast<int>(std::lround((o1 + o2) / 2.0));
  if ((o1 + o2) % 2 != 0)
    r.warnings.push_back("landmark offsets " + std::to_string(o1) + " and " + std::to_string(o2) +
                         " disagree; mean rounded to " + std::to_string(r.offset));
  if (std::abs(o1 - o2) > 2)
    r.warnings.push_back("non-rigid mismatch: landmark offsets differ by " + std::to_string(std::abs(o1 - o2)) +
                         " frames");
  return r;
}

/// Per-frame values of the floating pullback reindexed onto reference frames.
/// Pure reindexing; reference frames with no floating counterpart are empty.
template <typename T>
std::vector<std::optional<T>> apply_registration(const std::vector<T>& float_values, const RegistrationResult& r,
                                                 int n_ref) {
  std::vector<std::optional<T>> out(n_ref);
  for (int f = 0; f < static_cast<int>(float_values.size()); ++f) {
    const int t = f + r.offset;
    if (t >= 0 && t < n_ref) out[t] = float_values[f];
  }
  return out;
}

inline nlohmann::json to_json(const RegistrationResult& r) {
  nlohmann::json j;
  j["offset_frames"] = r.offset;
  j["peak_correlation"] = r.peak_correlation ? nlohmann::json(*r.peak_correlation) : nlohmann::json(nullptr);
  j["mode"] = r.mode == Mode::automatic ? "automatic" : "landmark";
  j["warnings"] = r.warnings;
  j["n_ref"] = r.n_ref;
  j["n_float"] = r.n_float;
  std::vector<int> mapping(r.n_float);
  for (int f = 0; f < r.n_float; ++f) mapping[f] = r.map(f);
  j["mapping"] = mapping;
  return j;
}

}  // namespace octopus::registration
