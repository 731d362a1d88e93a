#pragma once

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "drt/image.hpp"

namespace drt {

// 8-bit PNG write. `encode_srgb` applies the sRGB transfer curve to the color
// channels (alpha stays linear); values are clamped to [0,1] either way.
inline void write_png(const std::string& path, const Image& img, bool encode_srgb = true) {
  check_usage(img.channels >= 1 && img.channels <= 4, "PNG supports 1..4 channels");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open '" + path + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed writing '" + path + "'");
  }
  int color_type = PNG_COLOR_TYPE_GRAY;
  if (img.channels == 2) color_type = PNG_COLOR_TYPE_GRAY_ALPHA;
  if (img.channels == 3) color_type = PNG_COLOR_TYPE_RGB;
  if (img.channels == 4) color_type = PNG_COLOR_TYPE_RGB_ALPHA;

  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  int color_channels = img.channels == 2 ? 1 : (img.channels == 4 ? 3 : img.channels);
  std::vector<png_byte> row(size_t(img.width) * size_t(img.channels));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double v = img.at(x, y, c);
        if (encode_srgb && c < color_channels) v = srgb_encode(v);
        row[size_t(x) * img.channels + size_t(c)] =
            png_byte(std::lround(clamp01(v) * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// 8-bit PNG read, returning values in [0,1] exactly as stored (no transfer
// conversion; callers decode sRGB where appropriate). 16-bit files are
// reduced, palettes expanded.
inline Image read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open '" + path + "'");
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    std::fclose(fp);
    throw ParseError("'" + path + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw ParseError("libpng failed reading '" + path + "'");
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_tRNS_to_alpha(png);
  png_set_strip_16(png);
  png_read_update_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int channels = int(png_get_channels(png, info));

  std::vector<png_byte> row(size_t(w) * size_t(channels));
  Image img(int(w), int(h), channels);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(int(x), int(y), c) = double(row[size_t(x) * channels + size_t(c)]) / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

}  // namespace drt
