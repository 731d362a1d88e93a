#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "drt/math.hpp"

namespace drt {

// Row-major, channel-interleaved raster of doubles. Rendering fills RGBA
// (alpha doubles as the silhouette channel); masks use a single channel.
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c) {
    check_usage(w > 0 && h > 0 && c > 0, "image dimensions must be positive");
    data.assign(size_t(w) * size_t(h) * size_t(c), 0.0);
  }

  double& at(int x, int y, int c) {
    return data[(size_t(y) * size_t(width) + size_t(x)) * size_t(channels) + size_t(c)];
  }
  double at(int x, int y, int c) const {
    return data[(size_t(y) * size_t(width) + size_t(x)) * size_t(channels) + size_t(c)];
  }
  size_t pixel_count() const { return size_t(width) * size_t(height); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

inline double srgb_encode(double linear) {
  double v = clamp01(linear);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double encoded) {
  double v = clamp01(encoded);
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

// RGBA over a white backdrop -> RGB (the comparison space for mask-composited
// images, so background pixels agree regardless of the render background).
inline Image composite_over_white(const Image& img) {
  check_usage(img.channels == 4, "compositing needs an RGBA image");
  Image out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double a = clamp01(img.at(x, y, 3));
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c) * a + (1.0 - a);
    }
  return out;
}

inline Image channel(const Image& img, int c) {
  check_usage(c >= 0 && c < img.channels, "channel index out of range");
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(x, y, 0) = img.at(x, y, c);
  return out;
}

// ---------------------------------------------------------------------------
// Raw float dump: 12-byte header of little-endian uint32 {width, height,
// channels}, then row-major float32 samples, also little-endian.
// ---------------------------------------------------------------------------
namespace detail {
inline void put_u32_le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline uint32_t get_u32_le(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
}  // namespace detail

inline void save_raw(const std::string& path, const Image& img) {
  std::string buf;
  buf.reserve(12 + img.data.size() * 4);
  detail::put_u32_le(buf, uint32_t(img.width));
  detail::put_u32_le(buf, uint32_t(img.height));
  detail::put_u32_le(buf, uint32_t(img.channels));
  for (double d : img.data) {
    float f = float(d);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32_le(buf, bits);
  }
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open '" + path + "' for writing");
  size_t written = std::fwrite(buf.data(), 1, buf.size(), fp);
  std::fclose(fp);
  if (written != buf.size()) throw IoError("short write to '" + path + "'");
}

inline Image load_raw(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> buf;
  unsigned char chunk[4096];
  size_t n;
  while ((n = std::fread(chunk, 1, sizeof chunk, fp)) > 0) buf.insert(buf.end(), chunk, chunk + n);
  std::fclose(fp);
  if (buf.size() < 12) throw ParseError("'" + path + "' is too short for a raw image");
  uint32_t w = detail::get_u32_le(buf.data());
  uint32_t h = detail::get_u32_le(buf.data() + 4);
  uint32_t c = detail::get_u32_le(buf.data() + 8);
  size_t count = size_t(w) * h * c;
  if (w == 0 || h == 0 || c == 0 || buf.size() != 12 + count * 4)
    throw ParseError("'" + path + "' has an inconsistent raw-image header");
  Image img{int(w), int(h), int(c)};
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = detail::get_u32_le(buf.data() + 12 + i * 4);
    float f;
    std::memcpy(&f, &bits, 4);
    img.data[i] = double(f);
  }
  return img;
}

}  // namespace drt
