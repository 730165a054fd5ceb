#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "satdefense/errors.hpp"
#include "satdefense/fileio.hpp"
#include "satdefense/image.hpp"

namespace satdefense {

// Raw tensor file: "SATIMG\0\0", u32 version, u32 h, w, c, u32 true label,
// u32 target label (kNoLabel when absent), then h*w*c float64 values in
// channel-interleaved order. All integers little-endian.
inline constexpr char kTensorMagic[8] = {'S', 'A', 'T', 'I', 'M', 'G', '\0', '\0'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kNoLabel = 0xFFFFFFFFu;

struct TensorFile {
  Image image;
  std::uint32_t true_label = kNoLabel;
  std::uint32_t target_label = kNoLabel;
};

inline std::vector<std::uint8_t> encode_tensor(const TensorFile& t) {
  ByteWriter w;
  w.raw(std::string_view(kTensorMagic, sizeof kTensorMagic));
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(t.image.height()));
  w.u32(static_cast<std::uint32_t>(t.image.width()));
  w.u32(static_cast<std::uint32_t>(t.image.channels()));
  w.u32(t.true_label);
  w.u32(t.target_label);
  for (double v : t.image.values()) w.f64(v);
  return w.bytes();
}

inline TensorFile decode_tensor(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.raw(sizeof kTensorMagic) != std::string(kTensorMagic, sizeof kTensorMagic)) {
    throw FormatError("not a tensor file (bad magic)");
  }
  if (const auto v = r.u32(); v != kTensorVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(v));
  }
  const std::size_t h = r.u32();
  const std::size_t w = r.u32();
  const std::size_t c = r.u32();
  TensorFile t;
  t.true_label = r.u32();
  t.target_label = r.u32();
  if (h == 0 || w == 0 || (c != 1 && c != 3)) throw FormatError("bad tensor dimensions");
  if ((bytes.size() - 32) / 8 < h * w * c) throw FormatError("tensor file is truncated");
  std::vector<double> values(h * w * c);
  for (double& v : values) v = r.f64();
  if (!r.at_end()) throw FormatError("trailing bytes after tensor data");
  try {
    t.image = Image::from_values(h, w, c, std::move(values));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad tensor values: ") + e.what());
  }
  return t;
}

// Binary PGM (P5) or PPM (P6) with maxval 255.
inline Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw FormatError("PNM header value too large");
    }
    if (digits == 0) throw FormatError("malformed PNM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM/PPM file");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (maxval != 255) throw FormatError("only 8-bit PNM files (maxval 255) are supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PNM header");
  ++pos;
  if (w == 0 || h == 0) throw FormatError("empty PNM image");
  const std::size_t n = w * h * channels;
  if (bytes.size() - pos != n) throw FormatError("PNM pixel data has the wrong length");
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = bytes[pos + i] / 255.0;
  return Image::from_values(h, w, channels, std::move(values));
}

inline std::vector<std::uint8_t> encode_pnm(const Image& image) {
  const std::string header = std::string(image.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width()) + " " + std::to_string(image.height()) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.values()) out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  return out;
}

// Loads either format, chosen by content.
inline Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, kTensorMagic)) {
    return decode_tensor(bytes).image;
  }
  return decode_pnm(bytes);
}

}  // namespace satdefense
