#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "satdefense/errors.hpp"
#include "satdefense/fileio.hpp"
#include "satdefense/image.hpp"
#include "satdefense/rng.hpp"

namespace satdefense {

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

// CIFAR-10 binary batch: records of 1 label byte followed by the R, G and B
// planes (1024 bytes each, row-major). Planes are interleaved on load.
inline Dataset load_cifar10(const std::filesystem::path& path, std::size_t max_samples) {
  const auto bytes = read_binary_file(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw FormatError("'" + path.string() + "' is not a whole number of 3073-byte records (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  const std::size_t records = std::min(bytes.size() / kCifarRecord, max_samples);
  std::vector<LabeledSample> samples;
  samples.reserve(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw FormatError("record " + std::to_string(r) + " has label byte " +
                        std::to_string(rec[0]));
    }
    std::vector<double> values(3 * kCifarPlane);
    for (std::size_t p = 0; p < kCifarPlane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        values[p * 3 + c] = rec[1 + c * kCifarPlane + p] / 255.0;
      }
    }
    samples.push_back(
        {Image::from_values(kCifarSide, kCifarSide, 3, std::move(values)), rec[0]});
  }
  return Dataset("cifar10", 10, std::move(samples));
}

// Inverse of load_cifar10 for 32x32x3 datasets; intensities are rounded to the
// nearest 1/255 step.
inline std::vector<std::uint8_t> encode_cifar10(const Dataset& ds) {
  if (ds.height() != kCifarSide || ds.width() != kCifarSide || ds.channels() != 3) {
    throw ShapeError("CIFAR-10 encoding needs 32x32x3 images");
  }
  if (ds.num_classes() > 10) throw ArgumentError("CIFAR-10 encoding supports at most 10 classes");
  std::vector<std::uint8_t> out(ds.size() * kCifarRecord);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::uint8_t* rec = out.data() + r * kCifarRecord;
    rec[0] = static_cast<std::uint8_t>(ds[r].label);
    const auto v = ds[r].image.values();
    for (std::size_t p = 0; p < kCifarPlane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        rec[1 + c * kCifarPlane + p] =
            static_cast<std::uint8_t>(std::lround(v[p * 3 + c] * 255.0));
      }
    }
  }
  return out;
}

inline constexpr std::uint32_t kIdxImagesMagic = 2051;
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;

// MNIST IDX pair. Header geometry is taken from the file (28x28 for MNIST).
inline Dataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path,
                              std::size_t max_samples) {
  const auto img = read_binary_file(images_path);
  const auto lab = read_binary_file(labels_path);
  if (img.size() < 16) throw FormatError("IDX image header truncated");
  if (lab.size() < 8) throw FormatError("IDX label header truncated");
  if (const auto m = detail::read_be32(img, 0); m != kIdxImagesMagic) {
    throw FormatError("IDX images magic " + std::to_string(m) + ", expected 2051");
  }
  if (const auto m = detail::read_be32(lab, 0); m != kIdxLabelsMagic) {
    throw FormatError("IDX labels magic " + std::to_string(m) + ", expected 2049");
  }
  const std::size_t count = detail::read_be32(img, 4);
  const std::size_t rows = detail::read_be32(img, 8);
  const std::size_t cols = detail::read_be32(img, 12);
  const std::size_t label_count = detail::read_be32(lab, 4);
  if (count != label_count) {
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) throw FormatError("IDX file declares no data");
  const std::size_t plane = rows * cols;
  if (img.size() < 16 + count * plane) throw FormatError("IDX image data truncated");
  if (lab.size() < 8 + count) throw FormatError("IDX label data truncated");

  const std::size_t n = std::min(count, max_samples);
  std::vector<LabeledSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t label = lab[8 + i];
    if (label > 9) throw FormatError("IDX label " + std::to_string(label) + " out of range");
    std::vector<double> values(plane);
    for (std::size_t p = 0; p < plane; ++p) values[p] = img[16 + i * plane + p] / 255.0;
    samples.push_back({Image::from_values(rows, cols, 1, std::move(values)), label});
  }
  return Dataset("mnist", 10, std::move(samples));
}

// Knobs of the synthetic generator.
struct SynthOptions {
  double contrast = 0.10;        // offset of bright / dark object cells from the object base
  double contrast_min = -1.0;    // when >= 0, per-sample contrast ~ U(contrast_min, contrast)
  double background_amp = 0.10;  // amplitude of the smooth background field
  double noise_sigma = 0.0;      // iid pixel noise
  double object_fraction = 1.0;  // object side as a fraction of the image side
  std::size_t max_jitter = 2;    // random object offset in pixels
  double texture_amp = 0.015;    // amplitude of the fixed per-class block texture
  std::size_t texture_block = 1; // texture cell size in pixels
  double code_flip = 0.0;        // probability that the object carries another class's code
};

namespace detail {

// Per channel, two of the four object quadrants are bright, giving six
// balanced patterns (bits 0..3 = quadrants). Classes take the combinations
// with the largest pairwise Hamming distance, chosen greedily in a fixed order.
inline std::vector<std::uint32_t> synth_codes(std::size_t channels, std::size_t num_classes) {
  static constexpr std::array<std::uint32_t, 6> kBalanced = {0x3, 0x5, 0x6, 0x9, 0xA, 0xC};
  std::size_t total = 1;
  for (std::size_t c = 0; c < channels; ++c) total *= kBalanced.size();
  if (num_classes > total) {
    throw ArgumentError("synthetic data supports at most " + std::to_string(total) +
                        " classes with " + std::to_string(channels) + " channel(s)");
  }
  std::vector<std::uint32_t> all;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::uint32_t code = 0;
    std::size_t rest = idx;
    for (std::size_t c = 0; c < channels; ++c) {
      code |= kBalanced[rest % kBalanced.size()] << (4 * c);
      rest /= kBalanced.size();
    }
    all.push_back(code);
  }
  for (std::size_t d = 4 * channels; d >= 1; --d) {
    std::vector<std::uint32_t> picked;
    for (std::uint32_t code : all) {
      if (picked.size() == num_classes) break;
      const bool far = std::all_of(picked.begin(), picked.end(), [&](std::uint32_t p) {
        return static_cast<std::size_t>(std::popcount(p ^ code)) >= d;
      });
      if (far) picked.push_back(code);
    }
    if (picked.size() == num_classes) return picked;
  }
  throw ArgumentError("cannot build synthetic codes");
}

}  // namespace detail

// Deterministic download-free dataset. Each image is a smooth background of
// random color with a square "object" near the center; the object's four
// quadrants are brighter or darker than the object's base color according to
// a per-class code, so only relative brightness inside the object identifies
// the class. Samples vary in object offset, base colors, background and noise.
inline Dataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t side,
                             std::size_t channels, std::size_t num_classes,
                             const SynthOptions& opt = {}) {
  if (n == 0) throw ArgumentError("synth_dataset: n must be positive");
  if (num_classes < 2) throw ArgumentError("synth_dataset: need at least two classes");
  if (side < 8) throw ArgumentError("synth_dataset: side must be at least 8");
  if (channels != 1 && channels != 3) throw ArgumentError("synth_dataset: channels must be 1 or 3");
  const auto codes = detail::synth_codes(channels, num_classes);

  const auto object_side = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(opt.object_fraction * static_cast<double>(side))));
  const long object_origin = static_cast<long>((side - std::min(object_side, side)) / 2);
  const long half = static_cast<long>(object_side / 2);
  constexpr double kTwoPi = 6.283185307179586;

  // Per-class +-1 texture at absolute pixel positions, independent of `seed`.
  std::vector<std::vector<double>> textures(num_classes);
  if (opt.texture_amp > 0.0) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      Rng trng(derive_seed(0x7E87u, k, side, channels));
      const std::size_t block = std::max<std::size_t>(1, opt.texture_block);
      const std::size_t cells = (side + block - 1) / block;
      std::vector<double> cell(cells * cells * channels);
      for (double& t : cell) t = (trng() >> 63) ? opt.texture_amp : -opt.texture_amp;
      textures[k].resize(side * side * channels);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          for (std::size_t c = 0; c < channels; ++c) {
            textures[k][(y * side + x) * channels + c] =
                cell[((y / block) * cells + x / block) * channels + c];
          }
        }
      }
    }
  }

  std::vector<LabeledSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t label = i % num_classes;
    std::uint32_t code = codes[label];
    if (opt.code_flip > 0.0 && rng.uniform01() < opt.code_flip) {
      code = codes[(label + 1 + rng.below(num_classes - 1)) % num_classes];
    }
    const auto span = static_cast<std::uint64_t>(2 * opt.max_jitter + 1);
    const long ox = object_origin + static_cast<long>(rng.below(span)) - static_cast<long>(opt.max_jitter);
    const long oy = object_origin + static_cast<long>(rng.below(span)) - static_cast<long>(opt.max_jitter);

    const double contrast =
        opt.contrast_min >= 0.0 ? rng.uniform(opt.contrast_min, opt.contrast) : opt.contrast;
    std::array<double, 3> background{};
    std::array<double, 3> object_base{};
    std::array<std::array<double, 6>, 3> wave{};  // per channel: 2 waves x (fx, fy, phase)
    for (std::size_t c = 0; c < channels; ++c) {
      background[c] = rng.uniform(0.15, 0.85);
      object_base[c] = rng.uniform(0.3, 0.7);
      for (auto& v : wave[c]) v = rng.uniform01();
    }

    std::vector<double> values(side * side * channels);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const long rx = static_cast<long>(x) - ox;
        const long ry = static_cast<long>(y) - oy;
        const bool inside = rx >= 0 && ry >= 0 && rx < static_cast<long>(object_side) &&
                            ry < static_cast<long>(object_side);
        const std::size_t quadrant = (ry >= half ? 2 : 0) + (rx >= half ? 1 : 0);
        for (std::size_t c = 0; c < channels; ++c) {
          double v;
          if (inside) {
            const bool bright = (code >> (4 * c + quadrant)) & 1u;
            v = object_base[c] + (bright ? contrast : -contrast);
          } else {
            v = background[c];
            for (std::size_t k = 0; k < 2; ++k) {
              const double fx = wave[c][3 * k] * 1.5;
              const double fy = wave[c][3 * k + 1] * 1.5;
              v += 0.5 * opt.background_amp *
                   std::cos(kTwoPi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                                static_cast<double>(side) +
                            kTwoPi * wave[c][3 * k + 2]);
            }
          }
          const std::size_t idx = (y * side + x) * channels + c;
          if (!textures[label].empty()) v += textures[label][idx];
          v += opt.noise_sigma * rng.normal();
          values[idx] = Image::clamp01(v);
        }
      }
    }
    samples.push_back({Image::from_values(side, side, channels, std::move(values)), label});
  }
  return Dataset("synthetic", num_classes, std::move(samples));
}

}  // namespace satdefense
