#pragma once

// Label-editing rasterization in label-frame coordinates (row = A-line,
// col = radial sample). No wrap across the A-line seam.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "octopus/core.hpp"

namespace octopus::raster {

struct Pixel {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

enum class Tool { brush, freehand, fill };

inline const char* tool_name(Tool t) {
  switch (t) {
    case Tool::brush: return "brush";
    case Tool::freehand: return "freehand";
    case Tool::fill: return "fill";
  }
  return "brush";
}

/// Bresenham line, both endpoints included.
inline std::vector<Pixel> line(Pixel a, Pixel b) {
  std::vector<Pixel> out;
  int x0 = a.col, y0 = a.row;
  const int dx = std::abs(b.col - x0), sx = x0 < b.col ? 1 : -1;
  const int dy = -std::abs(b.row - y0), sy = y0 < b.row ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    out.push_back({y0, x0});
    if (x0 == b.col && y0 == b.row) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
  return out;
}

/// Disk stamp of radius r: offsets with dx² + dy² <= (r - 1)². Radius 1 is a
/// single pixel.
inline std::vector<Pixel> disk_offsets(int radius) {
  std::vector<Pixel> out;
  const int k = radius - 1;
  for (int dy = -k; dy <= k; ++dy)
    for (int dx = -k; dx <= k; ++dx)
      if (dx * dx + dy * dy <= k * k) out.push_back({dy, dx});
  return out;
}

inline void paint(LabelFrame& f, int row, int col, std::uint8_t v) {
  if (row >= 0 && col >= 0 && row < f.rows() && col < f.cols()) f(row, col) = v;
}

inline void brush(LabelFrame& f, const std::vector<Pixel>& path, int radius, std::uint8_t v) {
  if (radius < 1) throw InvalidArgument("brush radius must be >= 1");
  if (path.empty()) throw InvalidArgument("brush stroke needs at least one point");
  const auto stamp = disk_offsets(radius);
  auto dab = [&](Pixel p) {
    for (const auto& o : stamp) paint(f, p.row + o.row, p.col + o.col, v);
  };
  if (path.size() == 1) dab(path[0]);
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    for (const auto& p : line(path[i], path[i + 1])) dab(p);
}

/// Closed polygon: outline plus interior by the even-odd rule, sampled at
/// pixel centres (integer coordinates).
inline void freehand(LabelFrame& f, const std::vector<Pixel>& poly, std::uint8_t v) {
  const int n = static_cast<int>(poly.size());
  if (n < 3) throw InvalidArgument("freehand outline needs at least three points");
  int lo = poly[0].row, hi = poly[0].row;
  for (const auto& p : poly) {
    lo = std::min(lo, p.row);
    hi = std::max(hi, p.row);
  }
  std::vector<double> xs;
  for (int y = std::max(lo, 0); y <= std::min(hi, f.rows() - 1); ++y) {
    xs.clear();
    for (int i = 0; i < n; ++i) {
      const Pixel a = poly[i], b = poly[(i + 1) % n];
      if ((a.row > y) == (b.row > y)) continue;
      xs.push_back(a.col + static_cast<double>(y - a.row) * (b.col - a.col) / (b.row - a.row));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2)
      for (int x = std::max(0, static_cast<int>(std::ceil(xs[k])));
           x < std::min(f.cols(), static_cast<int>(std::ceil(xs[k + 1]))); ++x)
        f(y, x) = v;
  }
  for (int i = 0; i < n; ++i)
    for (const auto& p : line(poly[i], poly[(i + 1) % n])) paint(f, p.row, p.col, v);
}

/// 4-connected flood fill of the region sharing the seed's label.
inline void flood(LabelFrame& f, Pixel seed, std::uint8_t v) {
  if (seed.row < 0 || seed.col < 0 || seed.row >= f.rows() || seed.col >= f.cols())
    throw InvalidArgument("fill seed outside the frame");
  const std::uint8_t old = f(seed.row, seed.col);
  if (old == v) return;
  std::vector<Pixel> stack{seed};
  f(seed.row, seed.col) = v;
  while (!stack.empty()) {
    const Pixel p = stack.back();
    stack.pop_back();
    const Pixel nb[4] = {{p.row - 1, p.col}, {p.row + 1, p.col}, {p.row, p.col - 1}, {p.row, p.col + 1}};
    for (const auto& q : nb)
      if (q.row >= 0 && q.col >= 0 && q.row < f.rows() && q.col < f.cols() && f(q.row, q.col) == old) {
        f(q.row, q.col) = v;
        stack.push_back(q);
      }
  }
}

// ---------------------------------------------------------------------------
// Edits
// ---------------------------------------------------------------------------

struct Edit {
  int frame = 0;
  Tool tool = Tool::brush;
  Label label = Label::calcium;
  std::vector<Pixel> points;
  int radius = 1;
  std::string timestamp;
};

/// Editable classes; background is allowed as an eraser.
inline Label parse_class(const std::string& s) {
  if (s == "lumen") return Label::lumen;
  if (s == "lipid") return Label::lipid;
  if (s == "calcium") return Label::calcium;
  if (s == "other") return Label::other;
  if (s == "background") return Label::background;
  throw InvalidArgument("unknown label class '" + s + "'");
}

inline Edit parse_edit(const nlohmann::json& j, int frame) {
  if (!j.is_object()) throw InvalidArgument("edit must be a JSON object");
  Edit e;
  e.frame = frame;
  const std::string tool = j.value("tool", "");
  if (tool == "brush") e.tool = Tool::brush;
  else if (tool == "freehand") e.tool = Tool::freehand;
  else if (tool == "fill") e.tool = Tool::fill;
  else throw InvalidArgument("tool must be brush, freehand or fill");
  if (!j.contains("class") || !j["class"].is_string()) throw InvalidArgument("class is required");
  e.label = parse_class(j["class"].get<std::string>());
  if (!j.contains("points") || !j["points"].is_array()) throw InvalidArgument("points must be an array");
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
      throw InvalidArgument("each point is [aline, r]");
    e.points.push_back({p[0].get<int>(), p[1].get<int>()});
  }
  if (j.contains("radius")) {
    if (!j["radius"].is_number_integer()) throw InvalidArgument("radius must be an integer");
    e.radius = j["radius"].get<int>();
  }
  if (j.contains("timestamp") && j["timestamp"].is_string()) e.timestamp = j["timestamp"].get<std::string>();
  return e;
}

inline nlohmann::json to_json(const Edit& e) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : e.points) pts.push_back({p.row, p.col});
  nlohmann::json j{{"frame", e.frame},        {"tool", tool_name(e.tool)}, {"class", label_name(e.label)},
                   {"points", pts},           {"radius", e.radius}};
  if (!e.timestamp.empty()) j["timestamp"] = e.timestamp;
  return j;
}

/// Points must lie inside the frame; throws InvalidArgument otherwise.
inline void apply(LabelFrame& f, const Edit& e) {
  for (const auto& p : e.points)
    if (p.row < 0 || p.col < 0 || p.row >= f.rows() || p.col >= f.cols())
      throw InvalidArgument("point (" + std::to_string(p.row) + ", " + std::to_string(p.col) + ") outside the frame");
  const auto v = code(e.label);
  switch (e.tool) {
    case Tool::brush: brush(f, e.points, e.radius, v); break;
    case Tool::freehand: freehand(f, e.points, v); break;
    case Tool::fill:
      if (e.points.size() != 1) throw InvalidArgument("fill takes exactly one seed point");
      flood(f, e.points[0], v);
      break;
  }
}

}  // namespace octopus::raster
