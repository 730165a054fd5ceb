#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>

#include "satdefense/errors.hpp"
#include "satdefense/image.hpp"
#include "satdefense/rng.hpp"

namespace satdefense {

// Limits of the stochastic affine transformation. translation and scaling are
// fractions of the image size, rotation is in degrees.
struct SatParams {
  double translation = 0.0;
  double scaling = 0.0;
  double rotation = 0.0;

  void validate() const {
    if (!(translation >= 0.0 && translation < 1.0)) throw ArgumentError("SAT translation limit must be in [0,1)");
    if (!(scaling >= 0.0 && scaling < 1.0)) throw ArgumentError("SAT scaling limit must be in [0,1)");
    if (!(rotation >= 0.0 && rotation < 90.0)) throw ArgumentError("SAT rotation limit must be in [0,90)");
  }

  friend bool operator==(const SatParams&, const SatParams&) = default;
};

// One concrete sample of SAT coefficients.
struct SatDraw {
  double dx = 0.0;     // fraction of width
  double dy = 0.0;     // fraction of height
  double dr = 0.0;     // degrees
  double ds = 1.0;     // scale factor

  friend bool operator==(const SatDraw&, const SatDraw&) = default;
};

enum class ScaleInterpolation { kBilinear, kNearest };

inline SatDraw sat_draw(const SatParams& params, Rng& rng) {
  params.validate();
  SatDraw d;
  d.dx = rng.uniform(-params.translation, params.translation);
  d.dy = rng.uniform(-params.translation, params.translation);
  d.dr = rng.uniform(-params.rotation, params.rotation);
  d.ds = rng.uniform(1.0 - params.scaling, 1.0 + params.scaling);
  return d;
}

namespace detail {

// floor() that treats values within 1e-9 below an integer as that integer, so
// trigonometric rounding (cos 90deg = 6e-17) does not shift whole rows.
inline long snap_floor(double v) noexcept {
  return static_cast<long>(std::floor(v + 1e-9));
}

inline Image sat_translate(const Image& in, double dx, double dy) {
  const long w = static_cast<long>(in.width());
  const long h = static_cast<long>(in.height());
  const long shift_x = static_cast<long>(std::floor(dx * static_cast<double>(w)));
  const long shift_y = static_cast<long>(std::floor(dy * static_cast<double>(h)));
  if (shift_x == 0 && shift_y == 0) return in;
  Image out(in.height(), in.width(), in.channels());
  const std::size_t ch = in.channels();
  for (long y = 0; y < h; ++y) {
    const long sy = y + shift_y;
    if (sy < 0 || sy >= h) continue;
    for (long x = 0; x < w; ++x) {
      const long sx = x + shift_x;
      if (sx < 0 || sx >= w) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) =
            in.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
      }
    }
  }
  return out;
}

// Inverse mapping about (floor(w/2), floor(h/2)) with floor sampling.
inline Image sat_rotate(const Image& in, double degrees) {
  if (degrees == 0.0) return in;
  const long w = static_cast<long>(in.width());
  const long h = static_cast<long>(in.height());
  const double cx = static_cast<double>(w / 2);
  const double cy = static_cast<double>(h / 2);
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  Image out(in.height(), in.width(), in.channels());
  const std::size_t ch = in.channels();
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double rx = static_cast<double>(x) - cx;
      const double ry = static_cast<double>(y) - cy;
      const long sx = snap_floor(rx * cs + ry * sn + cx);
      const long sy = snap_floor(-rx * sn + ry * cs + cy);
      if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) =
            in.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
      }
    }
  }
  return out;
}

// Resamples one axis position (pixel-center convention) into a source
// coordinate clamped to [0, in - 1].
inline double source_coord(std::size_t out_pos, std::size_t in_len, std::size_t out_len) {
  const double s = (static_cast<double>(out_pos) + 0.5) * static_cast<double>(in_len) /
                       static_cast<double>(out_len) - 0.5;
  if (s < 0.0) return 0.0;
  const double hi = static_cast<double>(in_len - 1);
  return s > hi ? hi : s;
}

// Resizes to floor(ds*h) x floor(ds*w), then center-crops or symmetrically
// zero-pads each axis back to the original size.
inline Image sat_scale(const Image& in, double ds, ScaleInterpolation interp) {
  const std::size_t h = in.height();
  const std::size_t w = in.width();
  const std::size_t ch = in.channels();
  const auto new_h = static_cast<std::size_t>(std::max(0.0, std::floor(ds * static_cast<double>(h))));
  const auto new_w = static_cast<std::size_t>(std::max(0.0, std::floor(ds * static_cast<double>(w))));
  if (new_h == h && new_w == w) return in;
  Image out(h, w, ch);
  if (new_h == 0 || new_w == 0) return out;

  // Offset of the resized grid inside the output frame: positive pads,
  // negative crops.
  const long off_y = (static_cast<long>(h) - static_cast<long>(new_h)) / 2;
  const long off_x = (static_cast<long>(w) - static_cast<long>(new_w)) / 2;
  for (std::size_t y = 0; y < h; ++y) {
    const long ry = static_cast<long>(y) - off_y;
    if (ry < 0 || ry >= static_cast<long>(new_h)) continue;
    const double sy = source_coord(static_cast<std::size_t>(ry), h, new_h);
    for (std::size_t x = 0; x < w; ++x) {
      const long rx = static_cast<long>(x) - off_x;
      if (rx < 0 || rx >= static_cast<long>(new_w)) continue;
      const double sx = source_coord(static_cast<std::size_t>(rx), w, new_w);
      if (interp == ScaleInterpolation::kNearest) {
        const auto nx = static_cast<std::size_t>(std::lround(sx));
        const auto ny = static_cast<std::size_t>(std::lround(sy));
        for (std::size_t c = 0; c < ch; ++c) out.at(x, y, c) = in.at(nx, ny, c);
        continue;
      }
      const auto x0 = static_cast<std::size_t>(sx);
      const auto y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = in.at(x0, y0, c) * (1.0 - fx) + in.at(x1, y0, c) * fx;
        const double bot = in.at(x0, y1, c) * (1.0 - fx) + in.at(x1, y1, c) * fx;
        out.at(x, y, c) = Image::clamp01(top * (1.0 - fy) + bot * fy);
      }
    }
  }
  return out;
}

}  // namespace detail

// Translation, then rotation, then scaling. Each stage fills uncovered pixels
// with zeros.
inline Image sat_apply(const Image& image, const SatDraw& draw,
                       ScaleInterpolation interp = ScaleInterpolation::kBilinear) {
  Image out = detail::sat_translate(image, draw.dx, draw.dy);
  out = detail::sat_rotate(out, draw.dr);
  return detail::sat_scale(out, draw.ds, interp);
}

inline double bit_depth_quantize(double v, int bits) {
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return std::floor(v * levels + 0.5) / levels;
}

inline Image bit_depth_reduce(const Image& image, int bits) {
  if (bits < 1 || bits > 8) throw ArgumentError("bit depth must be in [1,8]");
  Image out = image;
  for (double& v : out.values_mut()) v = bit_depth_quantize(v, bits);
  return out;
}

// Fixed six-decimal rendering with trailing zeros removed: 0.16 -> "0.16".
inline std::string format_compact(double v) {
  std::string t = std::to_string(v);
  t.erase(t.find_last_not_of('0') + 1);
  if (!t.empty() && t.back() == '.') t.pop_back();
  if (t == "-0") t = "0";
  return t;
}

struct IdentityDefense {
  friend bool operator==(const IdentityDefense&, const IdentityDefense&) = default;
};

struct SatDefense {
  SatParams params;
  ScaleInterpolation interpolation = ScaleInterpolation::kBilinear;
  friend bool operator==(const SatDefense&, const SatDefense&) = default;
};

struct BitDepthDefense {
  int bits = 8;
  friend bool operator==(const BitDepthDefense&, const BitDepthDefense&) = default;
};

using DefenseKind = std::variant<IdentityDefense, SatDefense, BitDepthDefense>;

inline bool is_randomized(const DefenseKind& kind) noexcept {
  return std::holds_alternative<SatDefense>(kind);
}

inline void validate(const DefenseKind& kind) {
  if (const auto* sat = std::get_if<SatDefense>(&kind)) sat->params.validate();
  if (const auto* bd = std::get_if<BitDepthDefense>(&kind)) {
    if (bd->bits < 1 || bd->bits > 8) throw ArgumentError("bit depth must be in [1,8]");
  }
}

// Short stable identifier used in report files, e.g. "sat(0.16,0.16,4)".
inline std::string defense_id(const DefenseKind& kind) {
  struct Visitor {
    std::string operator()(const IdentityDefense&) const { return "identity"; }
    std::string operator()(const SatDefense& s) const {
      const auto fmt = format_compact;
      return "sat(" + fmt(s.params.translation) + "," + fmt(s.params.scaling) + "," +
             fmt(s.params.rotation) + ")";
    }
    std::string operator()(const BitDepthDefense& b) const {
      return "bitdepth(" + std::to_string(b.bits) + ")";
    }
  };
  return std::visit(Visitor{}, kind);
}

inline Image defend(const Image& image, const DefenseKind& kind, Rng& rng) {
  struct Visitor {
    const Image& image;
    Rng& rng;
    Image operator()(const IdentityDefense&) const { return image; }
    Image operator()(const SatDefense& s) const {
      return sat_apply(image, sat_draw(s.params, rng), s.interpolation);
    }
    Image operator()(const BitDepthDefense& b) const { return bit_depth_reduce(image, b.bits); }
  };
  return std::visit(Visitor{image, rng}, kind);
}

}  // namespace satdefense
