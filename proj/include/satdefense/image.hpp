#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "satdefense/errors.hpp"

namespace satdefense {

// H x W x C intensities in [0, 1], row-major with channels interleaved:
// index = (y * width + x) * channels + c.
class Image {
 public:
  Image() = default;

  // All-zero image.
  Image(std::size_t height, std::size_t width, std::size_t channels)
      : height_(height), width_(width), channels_(channels),
        data_(height * width * channels, 0.0) {
    if (channels != 1 && channels != 3) {
      throw ArgumentError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
  }

  // Validates length and range.
  static Image from_values(std::size_t height, std::size_t width, std::size_t channels,
                           std::vector<double> values) {
    Image img(height, width, channels);
    if (values.size() != img.data_.size()) {
      throw ShapeError("image data length " + std::to_string(values.size()) +
                       " does not match " + std::to_string(height) + "x" +
                       std::to_string(width) + "x" + std::to_string(channels));
    }
    for (double v : values) {
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("image intensity outside [0,1]");
    }
    img.data_ = std::move(values);
    return img;
  }

  // Clamps every value into [0, 1] (NaN becomes 0).
  static Image from_clamped(std::size_t height, std::size_t width, std::size_t channels,
                            std::vector<double> values) {
    for (double& v : values) v = clamp01(v);
    return from_values(height, width, channels, std::move(values));
  }

  static double clamp01(double v) noexcept {
    if (!(v > 0.0)) return 0.0;
    return v < 1.0 ? v : 1.0;
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> values() const noexcept { return data_; }
  // Mutable access; callers keep values inside [0, 1].
  std::span<double> values_mut() noexcept { return data_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t c) const noexcept {
    return (y * width_ + x) * channels_ + c;
  }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const noexcept {
    return data_[index(x, y, c)];
  }
  double& at(std::size_t x, std::size_t y, std::size_t c = 0) noexcept {
    return data_[index(x, y, c)];
  }

  bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
           std::to_string(channels_);
  }

  bool in_range() const noexcept {
    for (double v : data_) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
    }
    return true;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

struct LabeledSample {
  Image image;
  std::size_t label = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

// Non-empty, homogeneous collection of labeled images. Immutable once built.
class Dataset {
 public:
  Dataset(std::string name, std::size_t num_classes, std::vector<LabeledSample> samples)
      : name_(std::move(name)), num_classes_(num_classes), samples_(std::move(samples)) {
    if (samples_.empty()) throw ArgumentError("dataset '" + name_ + "' is empty");
    if (num_classes_ < 2) throw ArgumentError("dataset needs at least two classes");
    const Image& first = samples_.front().image;
    for (const auto& s : samples_) {
      if (!s.image.same_shape(first)) {
        throw ShapeError("dataset '" + name_ + "' mixes image shapes");
      }
      if (s.label >= num_classes_) {
        throw ArgumentError("label " + std::to_string(s.label) + " >= num_classes " +
                            std::to_string(num_classes_));
      }
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const LabeledSample& operator[](std::size_t i) const { return samples_.at(i); }
  const std::vector<LabeledSample>& samples() const noexcept { return samples_; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  std::size_t height() const noexcept { return samples_.front().image.height(); }
  std::size_t width() const noexcept { return samples_.front().image.width(); }
  std::size_t channels() const noexcept { return samples_.front().image.channels(); }

  // First `n` samples (or all, if fewer).
  Dataset head(std::size_t n) const {
    std::vector<LabeledSample> out(samples_.begin(),
                                   samples_.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(n, samples_.size())));
    return Dataset(name_, num_classes_, std::move(out));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::string name_;
  std::size_t num_classes_ = 0;
  std::vector<LabeledSample> samples_;
};

}  // namespace satdefense
