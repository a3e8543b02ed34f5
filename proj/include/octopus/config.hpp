#pragma once

// Pipeline configuration: every tunable, JSON with strict validation.
// Unknown keys and out-of-range values raise ConfigError naming the path.

#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <type_traits>

#include "json.hpp"
#include "octopus/core.hpp"
#include "octopus/plaque.hpp"
#include "octopus/preprocess.hpp"
#include "octopus/quant.hpp"
#include "octopus/stent.hpp"

namespace octopus {

enum class Mode { baseline, follow_up, stent_analysis };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::follow_up: return "follow_up";
    case Mode::stent_analysis: return "stent_analysis";
  }
  return "baseline";
}

/// Accepts the config spellings and the CLI short forms.
inline Mode parse_mode(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "follow_up" || s == "followup") return Mode::follow_up;
  if (s == "stent_analysis" || s == "stent") return Mode::stent_analysis;
  throw ConfigError("mode: unknown value '" + s + "'");
}

struct Roi {
  int first = 0;
  int last = 0;  // inclusive
  friend bool operator==(const Roi&, const Roi&) = default;
};

struct PipelineConfig {
  Mode mode = Mode::baseline;
  std::optional<Roi> roi;
  preprocess::GuidewireOptions guidewire;
  preprocess::LumenOptions lumen;
  int crop_depth_px = 300;
  double patch_sigma = 1.0;
  double gate_pixel_threshold = 0.5;
  double gate_threshold = 0.04;
  int gate_kernel = 3;
  double calcium_threshold = 0.5;
  int calcium_opening_radius = 2;
  plaque::ReferenceOptions reference;
  stent::StrutOptions stent;
  std::string detector_model;  // empty: train from the default phantom corpus
  std::string coverage_model;
  quant::ScoreThresholds score;
  int enface_bins = 360;
  int threads = 0;  // 0: hardware concurrency
};

namespace config_detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }
  template <typename T>
  void num(const char* key, T& out, double lo, double hi) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_[key];
    if (!v.is_number() || (std::is_integral_v<T> && !v.is_number_integer()))
      throw ConfigError(where(key) + ": expected " + (std::is_integral_v<T> ? "an integer" : "a number"));
    const double d = v.get<double>();
    if (!(d >= lo && d <= hi))
      throw ConfigError(where(key) + ": " + v.dump() + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
    out = v.get<T>();
  }
  void str(const char* key, std::string& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_[key].is_string()) throw ConfigError(where(key) + ": expected a string");
    out = j_[key].get<std::string>();
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_[key] : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where(k.c_str()) + ": unknown key");
  }

 private:
  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  static std::string fmt(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%g", v);
    return b;
  }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline constexpr double kBig = 1e9;

}  // namespace config_detail

inline nlohmann::json to_json(const PipelineConfig& c) {
  using nlohmann::json;
  json j;
  j["mode"] = mode_name(c.mode);
  j["roi"] = c.roi ? json::array({c.roi->first, c.roi->last}) : json(nullptr);
  j["guidewire"] = {{"jump", c.guidewire.jump},
                    {"edge_window", c.guidewire.edge_window},
                    {"min_contrast", c.guidewire.min_contrast},
                    {"max_band_ratio", c.guidewire.max_band_ratio}};
  j["lumen"] = {{"jump", c.lumen.jump},
                {"sigma", c.lumen.sigma},
                {"min_radius_px", c.lumen.min_radius_px},
                {"min_score", c.lumen.min_score},
                {"opening_radius", c.lumen.opening_radius},
                {"shadow_ratio", c.lumen.shadow_ratio}};
  j["patch"] = {{"crop_depth_px", c.crop_depth_px}, {"sigma", c.patch_sigma}};
  j["gate"] = {{"pixel_threshold", c.gate_pixel_threshold}, {"threshold", c.gate_threshold}, {"kernel", c.gate_kernel}};
  const auto& r = c.reference;
  j["calcium"] = {{"threshold", c.calcium_threshold},
                  {"opening_radius", c.calcium_opening_radius},
                  {"reference",
                   {{"low_ratio", r.low_ratio},
                    {"full_low_ratio", r.full_low_ratio},
                    {"border_contrast", r.border_contrast},
                    {"border_full_contrast", r.border_full_contrast},
                    {"border_search_px", r.border_search_px},
                    {"min_component_px", r.min_component_px},
                    {"shallow_depth_px", r.shallow_depth_px},
                    {"shadow_ratio", r.shadow_ratio}}}};
  const auto& d = c.stent.detect;
  j["stent"] = {{"inward_px", d.inward_px},
                {"outward_px", d.outward_px},
                {"bloom_px", d.bloom_px},
                {"peak_ratio", d.peak_ratio},
                {"shadow_ratio", d.shadow_ratio},
                {"shadow_gap_px", d.shadow_gap_px},
                {"shadow_px", d.shadow_px},
                {"surface_px", d.surface_px},
                {"profile_px", d.profile_px},
                {"strut_thickness_um", c.stent.strut_thickness_um},
                {"malapposition_threshold_um", c.stent.malapposition_threshold_um},
                {"detector_threshold", c.stent.detector_threshold},
                {"detector_model", c.detector_model},
                {"coverage_model", c.coverage_model}};
  j["score"] = {{"angle_deg", c.score.angle_deg}, {"length_mm", c.score.length_mm},
                {"thickness_mm", c.score.thickness_mm}};
  j["enface_bins"] = c.enface_bins;
  j["threads"] = c.threads;
  return j;
}

/// Overlays `j` onto `base`; absent keys keep their current values.
inline PipelineConfig parse_config(const nlohmann::json& j, PipelineConfig c = {}) {
  using config_detail::kBig;
  using config_detail::Reader;
  Reader top(j, "");
  std::string mode = mode_name(c.mode);
  top.str("mode", mode);
  c.mode = parse_mode(mode);
  if (const auto* roi = top.sub("roi")) {
    if (roi->is_null()) {
      c.roi.reset();
    } else {
      if (!roi->is_array() || roi->size() != 2 || !(*roi)[0].is_number_integer() || !(*roi)[1].is_number_integer())
        throw ConfigError("roi: expected [first, last] frame indices");
      const Roi r{(*roi)[0].get<int>(), (*roi)[1].get<int>()};
      if (r.first < 0 || r.last < r.first) throw ConfigError("roi: need 0 <= first <= last");
      c.roi = r;
    }
  }
  if (const auto* g = top.sub("guidewire")) {
    Reader s(*g, "guidewire");
    s.num("jump", c.guidewire.jump, 0, 64);
    s.num("edge_window", c.guidewire.edge_window, 1, 64);
    s.num("min_contrast", c.guidewire.min_contrast, 0, kBig);
    s.num("max_band_ratio", c.guidewire.max_band_ratio, 0, 1);
    s.finish();
  }
  if (const auto* l = top.sub("lumen")) {
    Reader s(*l, "lumen");
    s.num("jump", c.lumen.jump, 0, 64);
    s.num("sigma", c.lumen.sigma, 0, 50);
    s.num("min_radius_px", c.lumen.min_radius_px, 0, 10000);
    s.num("min_score", c.lumen.min_score, 0, 1);
    s.num("opening_radius", c.lumen.opening_radius, 0, 20);
    s.num("shadow_ratio", c.lumen.shadow_ratio, 0, 1);
    s.finish();
  }
  if (const auto* p = top.sub("patch")) {
    Reader s(*p, "patch");
    s.num("crop_depth_px", c.crop_depth_px, 1, 10000);
    s.num("sigma", c.patch_sigma, 0, 50);
    s.finish();
  }
  if (const auto* g = top.sub("gate")) {
    Reader s(*g, "gate");
    s.num("pixel_threshold", c.gate_pixel_threshold, 0, 1);
    s.num("threshold", c.gate_threshold, 0, 1);
    s.num("kernel", c.gate_kernel, 1, 99);
    s.finish();
  }
  if (const auto* k = top.sub("calcium")) {
    Reader s(*k, "calcium");
    s.num("threshold", c.calcium_threshold, 0, 1);
    s.num("opening_radius", c.calcium_opening_radius, 0, 20);
    if (const auto* r = s.sub("reference")) {
      Reader t(*r, "calcium.reference");
      auto& o = c.reference;
      t.num("low_ratio", o.low_ratio, 0, 10);
      t.num("full_low_ratio", o.full_low_ratio, 0, 10);
      t.num("border_contrast", o.border_contrast, 0, 100);
      t.num("border_full_contrast", o.border_full_contrast, 0, 100);
      t.num("border_search_px", o.border_search_px, 1, 100);
      t.num("min_component_px", o.min_component_px, 0, 1e7);
      t.num("shallow_depth_px", o.shallow_depth_px, 0, 10000);
      t.num("shadow_ratio", o.shadow_ratio, 0, 1);
      t.finish();
      if (!(o.full_low_ratio < o.low_ratio)) throw ConfigError("calcium.reference: full_low_ratio must be < low_ratio");
      if (!(o.border_contrast < o.border_full_contrast))
        throw ConfigError("calcium.reference: border_contrast must be < border_full_contrast");
    }
    s.finish();
  }
  if (const auto* st = top.sub("stent")) {
    Reader s(*st, "stent");
    auto& d = c.stent.detect;
    s.num("inward_px", d.inward_px, 0, 10000);
    s.num("outward_px", d.outward_px, 0, 10000);
    s.num("bloom_px", d.bloom_px, 1, 100);
    s.num("peak_ratio", d.peak_ratio, 0, kBig);
    s.num("shadow_ratio", d.shadow_ratio, 0, 1);
    s.num("shadow_gap_px", d.shadow_gap_px, 0, 1000);
    s.num("shadow_px", d.shadow_px, 1, 10000);
    s.num("surface_px", d.surface_px, 1, 10000);
    s.num("profile_px", d.profile_px, 1, 10000);
    s.num("strut_thickness_um", c.stent.strut_thickness_um, 0, 10000);
    s.num("malapposition_threshold_um", c.stent.malapposition_threshold_um, 0, 10000);
    s.num("detector_threshold", c.stent.detector_threshold, 0, 1);
    s.str("detector_model", c.detector_model);
    s.str("coverage_model", c.coverage_model);
    s.finish();
  }
  if (const auto* sc = top.sub("score")) {
    Reader s(*sc, "score");
    s.num("angle_deg", c.score.angle_deg, 0, 360);
    s.num("length_mm", c.score.length_mm, 0, kBig);
    s.num("thickness_mm", c.score.thickness_mm, 0, kBig);
    s.finish();
  }
  top.num("enface_bins", c.enface_bins, 1, 100000);
  top.num("threads", c.threads, 0, 1024);
  top.finish();
  return c;
}

inline PipelineConfig parse_config_text(const std::string& text, PipelineConfig base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, std::move(base));
}

}  // namespace octopus
