#pragma once

// Minimal PNG encoder (8-bit grayscale and RGB) over zlib, plus the
// display mappings used by the viewer endpoints.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "octopus/core.hpp"

namespace octopus::png {

namespace detail {

inline void put_be32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v >> 24));
  s.push_back(static_cast<char>(v >> 16));
  s.push_back(static_cast<char>(v >> 8));
  s.push_back(static_cast<char>(v));
}

inline void chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(
                    crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

inline std::string encode(int width, int height, int channels, const std::vector<std::uint8_t>& pixels) {
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (width * channels + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels.data()) + static_cast<std::size_t>(y) * width * channels,
               static_cast<std::size_t>(width) * channels);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string z(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("png compression failed");
  z.resize(len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);            // grayscale / truecolour
  ihdr.append(std::string("\0\0\0", 3));            // compression, filter, interlace
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", "");
  return out;
}

}  // namespace detail

inline std::string encode_gray(const Image<std::uint8_t>& img) {
  return detail::encode(img.cols(), img.rows(), 1, img.data());
}

/// `rgb` holds rows × (3·cols) bytes.
inline std::string encode_rgb(int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw InvalidArgument("rgb buffer size mismatch");
  return detail::encode(width, height, 3, rgb);
}

/// Linear window from 0 to the 99.5th percentile of the image.
inline Image<std::uint8_t> to_display(const Image<std::uint16_t>& img) {
  Image<std::uint8_t> out(img.rows(), img.cols(), 0);
  if (img.size() == 0) return out;
  std::vector<std::uint32_t> hist(65536, 0);
  for (auto v : img.data()) ++hist[v];
  const std::size_t target = img.size() - img.size() / 200;
  std::size_t acc = 0;
  int hi = 0;
  for (int v = 0; v < 65536; ++v) {
    acc += hist[v];
    if (acc >= target) {
      hi = v;
      break;
    }
  }
  if (hi <= 0) hi = 1;
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data()[i] = static_cast<std::uint8_t>(std::min<long>(255, std::lround(img.data()[i] * 255.0 / hi)));
  return out;
}

/// Overlay colours: lumen yellow, calcium red, lipid green, other blue,
/// guidewire grey.
inline std::array<std::uint8_t, 3> label_color(std::uint8_t code) {
  switch (code) {
    case 1: return {255, 255, 0};
    case 2: return {255, 0, 0};
    case 3: return {0, 200, 0};
    case 4: return {0, 120, 255};
    case 5: return {128, 128, 128};
    default: return {0, 0, 0};
  }
}

/// Grey base blended 50% with label colours where a label is present. The
/// lumen is drawn as its boundary only so the image stays readable.
inline std::vector<std::uint8_t> overlay(const Image<std::uint8_t>& gray, const Image<std::uint8_t>& labels) {
  std::vector<std::uint8_t> rgb(gray.size() * 3);
  for (int y = 0; y < gray.rows(); ++y)
    for (int x = 0; x < gray.cols(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * gray.cols() + x;
      const auto g = gray.data()[i];
      std::uint8_t code = labels.data()[i];
      if (code == 1) {
        const bool edge = (x + 1 < gray.cols() && labels(y, x + 1) != 1) || (x > 0 && labels(y, x - 1) != 1) ||
                          (y + 1 < gray.rows() && labels(y + 1, x) != 1) || (y > 0 && labels(y - 1, x) != 1);
        if (!edge) code = 0;
      }
      for (int c = 0; c < 3; ++c)
        rgb[i * 3 + c] = code ? static_cast<std::uint8_t>((g + label_color(code)[c]) / 2) : g;
    }
  return rgb;
}

}  // namespace octopus::png
