#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <string>

#include "satdefense/image.hpp"

namespace satdefense {

// All metrics work on the 0-255 intensity scale.
inline constexpr double kPixelRange = 255.0;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct MetricReport {
  double l2 = 0.0;
  double ssim = 1.0;
  double psnr = kInfinity;
  double mse = 0.0;
};

// Mean squared error on the 0-255 scale over every pixel-channel entry.
inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  const auto va = a.values();
  const auto vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = (va[i] - vb[i]) * kPixelRange;
    sum += d * d;
  }
  return sum / static_cast<double>(va.size());
}

// sqrt(sum of squared differences) / (h * w * C), on the 0-255 scale.
inline double l2_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "l2_distance");
  const auto va = a.values();
  const auto vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = (va[i] - vb[i]) * kPixelRange;
    sum += d * d;
  }
  return std::sqrt(sum) / static_cast<double>(va.size());
}

// Converts an l2 bound in the convention above to a Euclidean radius on the
// [0,1] scale for an image with `entries` values.
inline double l2_metric_to_unit_radius(double l2_metric, std::size_t entries) {
  return l2_metric * static_cast<double>(entries) / kPixelRange;
}

struct SsimTerms {
  double luminance = 1.0;
  double contrast = 1.0;
  double structure = 1.0;
  double value() const noexcept { return luminance * contrast * structure; }
};

// Whole-image SSIM: one mean/variance/covariance set over all entries,
// population moments.
inline SsimTerms ssim_terms(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim_global");
  const auto va = a.values();
  const auto vb = b.values();
  const auto n = static_cast<double>(va.size());
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    mean_a += va[i] * kPixelRange;
    mean_b += vb[i] * kPixelRange;
  }
  mean_a /= n;
  mean_b /= n;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double da = va[i] * kPixelRange - mean_a;
    const double db = vb[i] * kPixelRange - mean_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  var_a /= n;
  var_b /= n;
  cov /= n;
  const double sd_a = std::sqrt(var_a);
  const double sd_b = std::sqrt(var_b);
  constexpr double c1 = (0.01 * kPixelRange) * (0.01 * kPixelRange);
  constexpr double c2 = (0.03 * kPixelRange) * (0.03 * kPixelRange);
  SsimTerms t;
  t.luminance = (2.0 * mean_a * mean_b + c1) / (mean_a * mean_a + mean_b * mean_b + c1);
  t.contrast = (2.0 * sd_a * sd_b + c2) / (var_a + var_b + c2);
  t.structure = (cov + c2 / 2.0) / (sd_a * sd_b + c2 / 2.0);
  return t;
}

inline double ssim_global(const Image& a, const Image& b) {
  if (a == b) return 1.0;
  return ssim_terms(a, b).value();
}

inline double psnr_from_mse(double m) {
  if (m == 0.0) return kInfinity;
  return 20.0 * std::log10(kPixelRange) - 10.0 * std::log10(m);
}

// +infinity when the images are identical.
inline double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

inline MetricReport metric_report(const Image& a, const Image& b) {
  MetricReport r;
  r.mse = mse(a, b);
  r.l2 = l2_distance(a, b);
  r.ssim = ssim_global(a, b);
  r.psnr = psnr_from_mse(r.mse);
  return r;
}

// Report formatting: fixed 6 decimals, infinity as "inf".
inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace satdefense
