#pragma once

// Pullback data model, calibration and polar <-> cartesian geometry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace octopus {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define OCTOPUS_DEFINE_ERROR(Name)              \
  class Name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
  }

OCTOPUS_DEFINE_ERROR(OffsetOutOfRange);
OCTOPUS_DEFINE_ERROR(InvalidArgument);
OCTOPUS_DEFINE_ERROR(SpecInvalid);
OCTOPUS_DEFINE_ERROR(NoShadowFound);
OCTOPUS_DEFINE_ERROR(SegmentationFailed);
OCTOPUS_DEFINE_ERROR(DegenerateTraining);
OCTOPUS_DEFINE_ERROR(ModelKindMismatch);
OCTOPUS_DEFINE_ERROR(InsufficientStruts);
OCTOPUS_DEFINE_ERROR(DegenerateSignal);
OCTOPUS_DEFINE_ERROR(InvalidLandmarks);
OCTOPUS_DEFINE_ERROR(VersionMismatch);
OCTOPUS_DEFINE_ERROR(ConfigError);

#undef OCTOPUS_DEFINE_ERROR

/// Malformed file content. `offset` is the byte position where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// ---------------------------------------------------------------------------
// Image
// ---------------------------------------------------------------------------

/// Dense row-major 2-D grid. For polar data a row is one A-line and the
/// column is the radial sample index.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw InvalidArgument("negative image dimension");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const noexcept {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  std::span<T> row(int r) noexcept {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<const T> row(int r) const noexcept {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Image<U> cast() const {
    Image<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using PolarFrame = Image<std::uint16_t>;
using LabelFrame = Image<std::uint8_t>;
using FloatImage = Image<float>;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class Label : std::uint8_t {
  background = 0,
  lumen = 1,
  calcium = 2,
  lipid = 3,
  other = 4,
  guidewire = 5,
};

constexpr std::uint8_t code(Label l) noexcept { return static_cast<std::uint8_t>(l); }
constexpr std::uint8_t kMaxLabelCode = 5;

inline const char* label_name(Label l) {
  switch (l) {
    case Label::background: return "background";
    case Label::lumen: return "lumen";
    case Label::calcium: return "calcium";
    case Label::lipid: return "lipid";
    case Label::other: return "other";
    case Label::guidewire: return "guidewire";
  }
  return "unknown";
}

struct Calibration {
  double r_pixel_um = 5.0;
  double frame_spacing_mm = 0.2;
  /// Radial shift already applied to the stored pixel data (cumulative).
  int z_offset_px = 0;

  double r_pixel_mm() const noexcept { return r_pixel_um / 1000.0; }

  void validate(int n_r) const {
    if (!(r_pixel_um > 0)) throw InvalidArgument("r_pixel_um must be > 0");
    if (!(frame_spacing_mm > 0)) throw InvalidArgument("frame_spacing_mm must be > 0");
    if (std::abs(z_offset_px) >= n_r) throw OffsetOutOfRange("|z_offset_px| must be < n_r");
  }
};

constexpr int kMinAlines = 8;
constexpr int kMinRadial = 300;
constexpr int kDefaultAlines = 504;
constexpr int kDefaultRadial = 976;

struct Pullback {
  std::string id;
  Calibration calibration;
  int n_alines = kDefaultAlines;
  int n_r = kDefaultRadial;
  std::vector<PolarFrame> frames;

  int n_frames() const noexcept { return static_cast<int>(frames.size()); }

  void validate() const {
    if (n_alines < kMinAlines) throw InvalidArgument("n_alines must be >= 8");
    if (n_r < kMinRadial) throw InvalidArgument("n_r must be >= 300");
    calibration.validate(n_r);
    for (const auto& f : frames)
      if (f.rows() != n_alines || f.cols() != n_r)
        throw InvalidArgument("frame dimensions differ from pullback dimensions");
  }
};

inline Pullback make_pullback(std::string id, int n_frames, int n_alines, int n_r,
                              Calibration cal = {}) {
  Pullback pb;
  pb.id = std::move(id);
  pb.calibration = cal;
  pb.n_alines = n_alines;
  pb.n_r = n_r;
  pb.frames.assign(n_frames, PolarFrame(n_alines, n_r));
  return pb;
}

struct LabelVolume {
  int n_alines = 0;
  int n_r = 0;
  std::vector<LabelFrame> frames;

  LabelVolume() = default;
  LabelVolume(int n_frames, int alines, int radial)
      : n_alines(alines), n_r(radial), frames(n_frames, LabelFrame(alines, radial)) {}

  int n_frames() const noexcept { return static_cast<int>(frames.size()); }

  bool matches(const Pullback& pb) const noexcept {
    return n_alines == pb.n_alines && n_r == pb.n_r && n_frames() == pb.n_frames();
  }

  void validate() const {
    for (const auto& f : frames) {
      if (f.rows() != n_alines || f.cols() != n_r)
        throw InvalidArgument("label frame dimensions differ from volume dimensions");
      for (auto v : f.data())
        if (v > kMaxLabelCode) throw InvalidArgument("label code out of range");
    }
  }

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;
};

/// Radial index of a boundary, one value per A-line.
struct Contour {
  std::vector<double> radius;
  bool periodic = true;

  int size() const noexcept { return static_cast<int>(radius.size()); }
  double operator[](int i) const noexcept { return radius[static_cast<std::size_t>(i)]; }
  double& operator[](int i) noexcept { return radius[static_cast<std::size_t>(i)]; }

  /// Largest absolute step between neighbouring A-lines, including the wrap step.
  double max_step() const noexcept {
    double m = 0;
    const int n = size();
    for (int i = 0; i + 1 < n; ++i) m = std::max(m, std::abs(radius[i + 1] - radius[i]));
    if (periodic && n > 1) m = std::max(m, std::abs(radius[0] - radius[n - 1]));
    return m;
  }
};

/// Inclusive angular interval of A-lines [lower, upper]; wraps when upper < lower.
struct AngularBand {
  int lower = 0;
  int upper = 0;

  int width(int n_alines) const noexcept {
    return (upper - lower + n_alines) % n_alines + 1;
  }
  bool contains(int aline, int n_alines) const noexcept {
    return (aline - lower + n_alines) % n_alines < width(n_alines);
  }
  friend bool operator==(const AngularBand&, const AngularBand&) = default;
};

// ---------------------------------------------------------------------------
// Geometry helpers
// ---------------------------------------------------------------------------

inline double aline_angle_rad(int aline, int n_alines) noexcept {
  return 2.0 * std::numbers::pi * aline / n_alines;
}

inline double aline_angle_deg(int aline, int n_alines) noexcept {
  return 360.0 * aline / n_alines;
}

/// Nearest A-line to an angle in degrees (any real value, wraps).
inline int aline_for_angle(double deg, int n_alines) noexcept {
  const double a = deg / 360.0 * n_alines;
  long k = std::lround(a);
  k %= n_alines;
  if (k < 0) k += n_alines;
  return static_cast<int>(k);
}

inline int wrap_index(int i, int n) noexcept {
  i %= n;
  return i < 0 ? i + n : i;
}

struct Point2 {
  double x = 0;
  double y = 0;
};

inline Point2 polar_point(double radius, int aline, int n_alines) noexcept {
  const double t = aline_angle_rad(aline, n_alines);
  return {radius * std::cos(t), radius * std::sin(t)};
}

inline double distance(Point2 a, Point2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

// ---------------------------------------------------------------------------
// Domain conversion
// ---------------------------------------------------------------------------

enum class Interpolation { bilinear, nearest };

/// Square cartesian rendering of a polar frame. The catheter sits at the image
/// centre; the full radial extent of the frame maps to out_size / 2 pixels, so
/// out_size == 2 * n_r keeps one cartesian pixel per radial sample. Stored
/// pixels are already z-offset corrected (see apply_z_offset).
template <typename T>
Image<float> polar_to_cartesian(const Image<T>& polar, int out_size,
                                 Interpolation interp = Interpolation::bilinear) {
  if (out_size < 2) throw InvalidArgument("out_size must be >= 2");
  const int n_al = polar.rows();
  const int n_r = polar.cols();
  Image<float> out(out_size, out_size, 0.0f);
  if (n_al == 0 || n_r == 0) return out;
  const double centre = (out_size - 1) / 2.0;
  const double scale = 2.0 * n_r / out_size;  // polar px per cartesian px
  const double two_pi = 2.0 * std::numbers::pi;
  for (int y = 0; y < out_size; ++y) {
    for (int x = 0; x < out_size; ++x) {
      const double dx = (x - centre) * scale;
      const double dy = (y - centre) * scale;
      const double r = std::hypot(dx, dy);
      if (r > n_r - 1) continue;
      double t = std::atan2(dy, dx);
      if (t < 0) t += two_pi;
      const double a = t / two_pi * n_al;
      if (interp == Interpolation::nearest) {
        const int ai = wrap_index(static_cast<int>(std::lround(a)), n_al);
        const int ri = static_cast<int>(std::lround(r));
        out(y, x) = static_cast<float>(polar(ai, std::min(ri, n_r - 1)));
        continue;
      }
      const int a0 = wrap_index(static_cast<int>(std::floor(a)), n_al);
      const int a1 = (a0 + 1) % n_al;
      const double fa = a - std::floor(a);
      const int r0 = static_cast<int>(std::floor(r));
      const int r1 = std::min(r0 + 1, n_r - 1);
      const double fr = r - r0;
      const double v0 = (1 - fr) * polar(a0, r0) + fr * polar(a0, r1);
      const double v1 = (1 - fr) * polar(a1, r0) + fr * polar(a1, r1);
      out(y, x) = static_cast<float>((1 - fa) * v0 + fa * v1);
    }
  }
  return out;
}

/// Inverse of polar_to_cartesian for the same out_size convention.
template <typename T>
Image<float> cartesian_to_polar(const Image<T>& cart, int n_alines, int n_r,
                                Interpolation interp = Interpolation::bilinear) {
  const int size = cart.rows();
  Image<float> out(n_alines, n_r, 0.0f);
  if (size < 2) return out;
  const double centre = (size - 1) / 2.0;
  const double scale = 2.0 * n_r / size;
  for (int a = 0; a < n_alines; ++a) {
    const double t = aline_angle_rad(a, n_alines);
    const double c = std::cos(t), s = std::sin(t);
    for (int r = 0; r < n_r; ++r) {
      const double x = centre + r * c / scale;
      const double y = centre + r * s / scale;
      if (interp == Interpolation::nearest) {
        const int xi = static_cast<int>(std::lround(x));
        const int yi = static_cast<int>(std::lround(y));
        if (xi >= 0 && yi >= 0 && xi < size && yi < size) out(a, r) = static_cast<float>(cart(yi, xi));
        continue;
      }
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      if (x0 < 0 || y0 < 0 || x0 + 1 >= size || y0 + 1 >= size) continue;
      const double fx = x - x0, fy = y - y0;
      const double v = (1 - fx) * (1 - fy) * cart(y0, x0) + fx * (1 - fy) * cart(y0, x0 + 1) +
                       (1 - fx) * fy * cart(y0 + 1, x0) + fx * fy * cart(y0 + 1, x0 + 1);
      out(a, r) = static_cast<float>(v);
    }
  }
  return out;
}

/// Shifts every A-line of one frame radially: out(a, r) = in(a, r - delta).
template <typename T>
Image<T> shift_radial(const Image<T>& in, int delta) {
  Image<T> out(in.rows(), in.cols(), T{});
  const int n_r = in.cols();
  for (int a = 0; a < in.rows(); ++a) {
    auto src = in.row(a);
    auto dst = out.row(a);
    for (int r = std::max(0, delta); r < std::min(n_r, n_r + delta); ++r) dst[r] = src[r - delta];
  }
  return out;
}

/// Radial z-offset correction. Vacated samples are zero; the shift accumulates
/// into calibration.z_offset_px.
inline Pullback apply_z_offset(const Pullback& pb, int delta_px) {
  if (std::abs(delta_px) >= pb.n_r) throw OffsetOutOfRange("|delta_px| must be < n_r");
  const int total = pb.calibration.z_offset_px + delta_px;
  if (std::abs(total) >= pb.n_r) throw OffsetOutOfRange("accumulated z-offset must stay < n_r");
  Pullback out = pb;
  out.calibration.z_offset_px = total;
  if (delta_px == 0) return out;
  for (auto& f : out.frames) f = shift_radial(f, delta_px);
  return out;
}

/// First depth_px radial samples of a pixel-shifted frame, zero padded.
template <typename T>
Image<T> crop_depth(const Image<T>& shifted, int depth_px = 300) {
  if (depth_px <= 0) throw InvalidArgument("depth_px must be > 0");
  Image<T> out(shifted.rows(), depth_px, T{});
  const int n = std::min(depth_px, shifted.cols());
  for (int a = 0; a < shifted.rows(); ++a)
    std::copy_n(shifted.row(a).begin(), n, out.row(a).begin());
  return out;
}

}  // namespace octopus
