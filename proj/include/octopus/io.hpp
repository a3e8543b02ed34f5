#pragma once

// Pullback container, label/probability volumes, CSV reports and phantom
// truth files.
//
// Container directory:
//   meta.json    id, n_frames, n_alines, n_r, r_pixel_um, frame_spacing_mm, z_offset_px
//   frames.raw   u16 little-endian, frame-major, A-line-major, r fastest
//   labels.raw   u8 codes, same layout (optional)
//   probs.raw    f32 little-endian calcium probabilities, same layout (optional)

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "octopus/core.hpp"
#include "octopus/phantom.hpp"
#include "octopus/quant.hpp"
#include "octopus/stent.hpp"

namespace octopus::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kContainerVersion = 1;

struct Meta {
  std::string id;
  int n_frames = 0;
  int n_alines = 0;
  int n_r = 0;
  Calibration calibration;
};

namespace detail {

inline std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + p.string());
}

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <typename T>
std::string encode_volume(const std::vector<Image<T>>& frames) {
  std::string out;
  std::size_t total = 0;
  for (const auto& f : frames) total += f.size();
  out.reserve(total * sizeof(T));
  for (const auto& f : frames)
    for (T v : f.data()) put_le(out, v);
  return out;
}

template <typename T>
std::vector<Image<T>> decode_volume(const std::string& bytes, int n_frames, int n_alines, int n_r,
                                    const std::string& what) {
  const std::uint64_t per = static_cast<std::uint64_t>(n_alines) * n_r * sizeof(T);
  const std::uint64_t want = per * static_cast<std::uint64_t>(n_frames);
  if (bytes.size() < want) throw FormatError(what + " truncated: expected " + std::to_string(want) + " bytes", bytes.size());
  if (bytes.size() > want) throw FormatError(what + " has trailing bytes", want);
  std::vector<Image<T>> frames(n_frames, Image<T>(n_alines, n_r));
  const char* p = bytes.data();
  for (auto& f : frames)
    for (auto& v : f.data()) {
      v = get_le<T>(p);
      p += sizeof(T);
    }
  return frames;
}

template <typename T>
T field(const json& j, const char* key, std::uint64_t at) {
  if (!j.contains(key)) throw FormatError(std::string("meta.json missing '") + key + "'", at);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("meta.json field '") + key + "' has the wrong type", at);
  }
}

}  // namespace detail

inline json meta_json(const Meta& m) {
  return {{"version", kContainerVersion},
          {"id", m.id},
          {"n_frames", m.n_frames},
          {"n_alines", m.n_alines},
          {"n_r", m.n_r},
          {"r_pixel_um", m.calibration.r_pixel_um},
          {"frame_spacing_mm", m.calibration.frame_spacing_mm},
          {"z_offset_px", m.calibration.z_offset_px}};
}

inline Meta parse_meta(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("meta.json is not valid JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  if (!j.is_object()) throw FormatError("meta.json must hold an object", 0);
  if (j.contains("version")) {
    if (!j["version"].is_number_integer()) throw FormatError("meta.json 'version' must be an integer", 0);
    const int v = j["version"].get<int>();
    if (v != kContainerVersion) throw VersionMismatch("unsupported container version " + std::to_string(v));
  }
  Meta m;
  m.id = detail::field<std::string>(j, "id", 0);
  m.n_frames = detail::field<int>(j, "n_frames", 0);
  m.n_alines = detail::field<int>(j, "n_alines", 0);
  m.n_r = detail::field<int>(j, "n_r", 0);
  m.calibration.r_pixel_um = detail::field<double>(j, "r_pixel_um", 0);
  m.calibration.frame_spacing_mm = detail::field<double>(j, "frame_spacing_mm", 0);
  m.calibration.z_offset_px = j.contains("z_offset_px") ? detail::field<int>(j, "z_offset_px", 0) : 0;
  if (m.n_frames < 0 || m.n_alines < kMinAlines || m.n_r < kMinRadial)
    throw FormatError("meta.json dimensions out of range", 0);
  try {
    m.calibration.validate(m.n_r);
  } catch (const Error& e) {
    throw FormatError(std::string("meta.json calibration: ") + e.what(), 0);
  }
  return m;
}

inline Meta read_meta(const fs::path& dir) { return parse_meta(detail::read_file(dir / "meta.json")); }

inline void save_pullback(const fs::path& dir, const Pullback& pb) {
  pb.validate();
  fs::create_directories(dir);
  Meta m{pb.id, pb.n_frames(), pb.n_alines, pb.n_r, pb.calibration};
  detail::write_file(dir / "meta.json", meta_json(m).dump(2) + "\n");
  detail::write_file(dir / "frames.raw", detail::encode_volume(pb.frames));
}

inline Pullback load_pullback(const fs::path& dir) {
  const Meta m = read_meta(dir);
  Pullback pb;
  pb.id = m.id;
  pb.calibration = m.calibration;
  pb.n_alines = m.n_alines;
  pb.n_r = m.n_r;
  pb.frames = detail::decode_volume<std::uint16_t>(detail::read_file(dir / "frames.raw"), m.n_frames, m.n_alines,
                                                   m.n_r, "frames.raw");
  return pb;
}

inline std::string encode_labels(const LabelVolume& v) { return detail::encode_volume(v.frames); }

inline LabelVolume decode_labels(const std::string& bytes, int n_frames, int n_alines, int n_r) {
  LabelVolume v;
  v.n_alines = n_alines;
  v.n_r = n_r;
  v.frames = detail::decode_volume<std::uint8_t>(bytes, n_frames, n_alines, n_r, "labels.raw");
  for (std::size_t i = 0; i < bytes.size(); ++i)
    if (static_cast<unsigned char>(bytes[i]) > kMaxLabelCode)
      throw FormatError("label code " + std::to_string(static_cast<unsigned char>(bytes[i])) + " out of range", i);
  return v;
}

inline void save_labels(const fs::path& path, const LabelVolume& v) { detail::write_file(path, encode_labels(v)); }

inline LabelVolume load_labels(const fs::path& path, int n_frames, int n_alines, int n_r) {
  return decode_labels(detail::read_file(path), n_frames, n_alines, n_r);
}

inline void save_probs(const fs::path& path, const std::vector<FloatImage>& probs) {
  detail::write_file(path, detail::encode_volume(probs));
}

inline std::vector<FloatImage> load_probs(const fs::path& path, int n_frames, int n_alines, int n_r) {
  auto v = detail::decode_volume<float>(detail::read_file(path), n_frames, n_alines, n_r, "probs.raw");
  std::uint64_t at = 0;
  for (const auto& f : v)
    for (float x : f.data()) {
      if (!(x >= 0.0f && x <= 1.0f)) throw FormatError("probability outside [0, 1]", at);
      at += 4;
    }
  return v;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline const char* kFrameCsvHeader =
    "frame,lumen_area_mm2,diam_max_mm,diam_min_mm,diam_mean_mm,calc_angle_deg,calc_thick_mm,calc_depth_mm,gated,flags";
inline const char* kLesionCsvHeader =
    "lesion,first_frame,last_frame,length_mm,max_angle_deg,max_thick_mm,min_depth_mm,calcium_score";
inline const char* kStentCsvHeader =
    "frame,aline,angle_deg,center_px,bloom_extent_px,shadow_width_alines,score,coverage,coverage_um,"
    "malapposition_um,malapposed";

namespace detail {

inline std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  // Avoid "-0.0000" so reports compare byte-exactly.
  if (std::strspn(buf, "-0.") == std::strlen(buf) && buf[0] == '-') return buf + 1;
  return buf;
}

inline std::string opt_num(const std::optional<double>& v, int digits = 4) { return v ? num(*v, digits) : ""; }

}  // namespace detail

inline std::string flags_text(const quant::FrameFlags& f) {
  std::string s;
  if (f.guidewire_interpolated) s += "guidewire_interpolated";
  if (f.segmentation_failed) s += std::string(s.empty() ? "" : "|") + "segmentation_failed";
  return s;
}

inline std::string frame_csv(const std::vector<quant::FrameQuant>& rows) {
  std::string out = std::string(kFrameCsvHeader) + "\n";
  for (const auto& q : rows) {
    out += std::to_string(q.frame) + "," + detail::num(q.lumen_area_mm2) + "," + detail::num(q.lumen_diam_max_mm) +
           "," + detail::num(q.lumen_diam_min_mm) + "," + detail::num(q.lumen_diam_mean_mm) + "," +
           detail::num(q.calc_angle_deg, 2) + "," + detail::opt_num(q.calc_max_thickness_mm) + "," +
           detail::opt_num(q.calc_min_depth_mm) + "," + (q.gated ? "1" : "0") + "," + flags_text(q.flags) + "\n";
  }
  return out;
}

inline std::string lesion_csv(const std::vector<quant::LesionQuant>& rows) {
  std::string out = std::string(kLesionCsvHeader) + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& l = rows[i];
    out += std::to_string(i) + "," + std::to_string(l.first_frame) + "," + std::to_string(l.last_frame) + "," +
           detail::num(l.length_mm) + "," + detail::num(l.max_angle_deg, 2) + "," + detail::num(l.max_thickness_mm) +
           "," + detail::opt_num(l.min_depth_mm) + "," + std::to_string(l.calcium_score) + "\n";
  }
  return out;
}

inline std::string stent_csv(const std::vector<stent::StrutRecord>& rows, int n_alines) {
  std::string out = std::string(kStentCsvHeader) + "\n";
  for (const auto& s : rows) {
    out += std::to_string(s.frame) + "," + std::to_string(s.aline) + "," +
           detail::num(s.aline_pos * 360.0 / n_alines, 2) + "," + detail::num(s.center_px, 1) + "," +
           std::to_string(s.bloom_extent_px) + "," + std::to_string(s.width_alines) + "," + detail::num(s.score) +
           "," + (s.covered ? "covered" : "uncovered") + "," + detail::num(s.coverage_um, 1) + "," +
           detail::num(s.malapposition_um, 1) + "," + (s.malapposed ? "1" : "0") + "\n";
  }
  return out;
}

/// Splits CSV text into rows of fields. Fields never contain commas or quotes here.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::size_t start = 0;
    for (;;) {
      const auto p = line.find(',', start);
      row.push_back(line.substr(start, p == std::string::npos ? std::string::npos : p - start));
      if (p == std::string::npos) break;
      start = p + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_text(const fs::path& p, const std::string& s) { detail::write_file(p, s); }
inline std::string read_text(const fs::path& p) { return detail::read_file(p); }

// ---------------------------------------------------------------------------
// Phantom truth
// ---------------------------------------------------------------------------

inline json frame_quant_json(const quant::FrameQuant& q) {
  json j = {{"frame", q.frame},
            {"lumen_area_mm2", q.lumen_area_mm2},
            {"diam_max_mm", q.lumen_diam_max_mm},
            {"diam_min_mm", q.lumen_diam_min_mm},
            {"diam_mean_mm", q.lumen_diam_mean_mm},
            {"calc_angle_deg", q.calc_angle_deg},
            {"gated", q.gated},
            {"flags", flags_text(q.flags)}};
  j["calc_thick_mm"] = q.calc_max_thickness_mm ? json(*q.calc_max_thickness_mm) : json(nullptr);
  j["calc_depth_mm"] = q.calc_min_depth_mm ? json(*q.calc_min_depth_mm) : json(nullptr);
  return j;
}

inline json truth_json(const phantom::PhantomSpec& spec, std::uint64_t seed, const phantom::GroundTruth& gt) {
  json j;
  j["spec"] = spec;
  j["seed"] = seed;
  json frames = json::array();
  for (std::size_t f = 0; f < gt.frame_quant.size(); ++f) {
    json fr = frame_quant_json(gt.frame_quant[f]);
    fr["lumen_radius_px"] = gt.lumen[f].radius;
    if (gt.guidewire[f]) fr["guidewire"] = {{"lower", gt.guidewire[f]->lower}, {"upper", gt.guidewire[f]->upper}};
    else fr["guidewire"] = nullptr;
    frames.push_back(std::move(fr));
  }
  j["frames"] = std::move(frames);
  json struts = json::array();
  for (const auto& s : gt.struts)
    struts.push_back({{"frame", s.frame},
                      {"aline", s.aline},
                      {"first_aline", s.first_aline},
                      {"width_alines", s.width_alines},
                      {"center_px", s.center_px},
                      {"lead_px", s.lead_px},
                      {"covered", s.covered},
                      {"coverage_um", s.coverage_um},
                      {"malapposition_um", s.malapposition_um},
                      {"occluded", s.occluded}});
  j["struts"] = std::move(struts);
  return j;
}

/// Writes the container plus labels.raw and truth.json.
inline void save_phantom(const fs::path& dir, const phantom::PhantomSpec& spec, std::uint64_t seed,
                         const phantom::Phantom& ph) {
  save_pullback(dir, ph.pullback);
  save_labels(dir / "labels.raw", ph.truth.labels);
  write_text(dir / "truth.json", truth_json(spec, seed, ph.truth).dump(2) + "\n");
}

}  // namespace octopus::io
