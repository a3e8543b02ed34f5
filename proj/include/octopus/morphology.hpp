#pragma once

// Binary morphology and connected components on 1-D series and 2-D masks.
// Masks hold 0/1. Erosion treats out-of-range samples as set, dilation as
// unset, so a structure touching the border is not eroded by the border.

#include <cstdint>
#include <vector>

#include "octopus/core.hpp"

namespace octopus::morph {

using Mask = Image<std::uint8_t>;

// ---------------------------------------------------------------------------
// 1-D
// ---------------------------------------------------------------------------

inline std::vector<bool> erode1d(const std::vector<bool>& in, int length) {
  const int n = static_cast<int>(in.size());
  const int half = length / 2;
  std::vector<bool> out(in.size());
  for (int i = 0; i < n; ++i) {
    bool v = true;
    for (int k = -half; k <= half && v; ++k) {
      const int j = i + k;
      if (j >= 0 && j < n && !in[j]) v = false;
    }
    out[i] = v;
  }
  return out;
}

inline std::vector<bool> dilate1d(const std::vector<bool>& in, int length) {
  const int n = static_cast<int>(in.size());
  const int half = length / 2;
  std::vector<bool> out(in.size());
  for (int i = 0; i < n; ++i) {
    bool v = false;
    for (int k = -half; k <= half && !v; ++k) {
      const int j = i + k;
      if (j >= 0 && j < n && in[j]) v = true;
    }
    out[i] = v;
  }
  return out;
}

inline std::vector<bool> open1d(const std::vector<bool>& in, int length) {
  return dilate1d(erode1d(in, length), length);
}

inline std::vector<bool> close1d(const std::vector<bool>& in, int length) {
  return erode1d(dilate1d(in, length), length);
}

// ---------------------------------------------------------------------------
// 2-D
// ---------------------------------------------------------------------------

struct Offset {
  int dr;
  int dc;
};

/// Disk structuring element; radius 2 is the 13-pixel "kernel size 5" disk.
inline std::vector<Offset> disk(int radius) {
  std::vector<Offset> se;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc)
      if (dr * dr + dc * dc <= radius * radius) se.push_back({dr, dc});
  return se;
}

/// `wrap_rows` makes the row axis periodic (the A-line axis of polar data).
inline Mask erode(const Mask& in, const std::vector<Offset>& se, bool wrap_rows) {
  const int R = in.rows(), C = in.cols();
  Mask out(R, C, 0);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (!in(r, c)) continue;
      bool keep = true;
      for (const auto& o : se) {
        int rr = r + o.dr;
        const int cc = c + o.dc;
        if (cc < 0 || cc >= C) continue;
        if (rr < 0 || rr >= R) {
          if (!wrap_rows) continue;
          rr = wrap_index(rr, R);
        }
        if (!in(rr, cc)) {
          keep = false;
          break;
        }
      }
      out(r, c) = keep ? 1 : 0;
    }
  }
  return out;
}

inline Mask dilate(const Mask& in, const std::vector<Offset>& se, bool wrap_rows) {
  const int R = in.rows(), C = in.cols();
  Mask out(R, C, 0);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (!in(r, c)) continue;
      for (const auto& o : se) {
        int rr = r + o.dr;
        const int cc = c + o.dc;
        if (cc < 0 || cc >= C) continue;
        if (rr < 0 || rr >= R) {
          if (!wrap_rows) continue;
          rr = wrap_index(rr, R);
        }
        out(rr, cc) = 1;
      }
    }
  }
  return out;
}

inline Mask open(const Mask& in, const std::vector<Offset>& se, bool wrap_rows) {
  return dilate(erode(in, se, wrap_rows), se, wrap_rows);
}

inline Mask close(const Mask& in, const std::vector<Offset>& se, bool wrap_rows) {
  return erode(dilate(in, se, wrap_rows), se, wrap_rows);
}

// ---------------------------------------------------------------------------
// Connected components
// ---------------------------------------------------------------------------

struct Components {
  Image<int> labels;  // -1 for unset pixels
  std::vector<int> sizes;
  int count() const noexcept { return static_cast<int>(sizes.size()); }
};

inline Components connected_components(const Mask& in, bool eight_connected, bool wrap_rows) {
  const int R = in.rows(), C = in.cols();
  Components cc{Image<int>(R, C, -1), {}};
  std::vector<std::pair<int, int>> stack;
  for (int r0 = 0; r0 < R; ++r0) {
    for (int c0 = 0; c0 < C; ++c0) {
      if (!in(r0, c0) || cc.labels(r0, c0) >= 0) continue;
      const int id = cc.count();
      int size = 0;
      stack.clear();
      stack.emplace_back(r0, c0);
      cc.labels(r0, c0) = id;
      while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        ++size;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (!eight_connected && dr != 0 && dc != 0) continue;
            int rr = r + dr;
            const int c2 = c + dc;
            if (c2 < 0 || c2 >= C) continue;
            if (rr < 0 || rr >= R) {
              if (!wrap_rows) continue;
              rr = wrap_index(rr, R);
            }
            if (in(rr, c2) && cc.labels(rr, c2) < 0) {
              cc.labels(rr, c2) = id;
              stack.emplace_back(rr, c2);
            }
          }
        }
      }
      cc.sizes.push_back(size);
    }
  }
  return cc;
}

}  // namespace octopus::morph
