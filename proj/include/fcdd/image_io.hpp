#pragma once

// 8-bit image buffers, PNG read/write via libpng, resizing, and conversion
// to planar double tensors.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fcdd/tensor.hpp"

namespace fcdd {

/// Interleaved (H, W, C) 8-bit image; C is 1 (gray) or 3 (RGB).
struct Image8 {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int c, int h, int w, std::uint8_t fill = 0)
      : channels(c), height(h), width(w), pixels(std::size_t(c) * h * w, fill) {}

  std::uint8_t& at(int y, int x, int c) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }
  friend bool operator==(const Image8&, const Image8&) = default;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline Image8 read_png(const std::filesystem::path& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ValidationError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeFailure("libpng initialization failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("malformed PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.channels = int(png_get_channels(png, info));
  img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + std::size_t(y) * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (img.channels != 1 && img.channels != 3) throw ValidationError("unsupported channel layout in " + path.string());
  return img;
}

inline void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw ValidationError("write_png: 1 or 3 channels required");
  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw RuntimeFailure("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeFailure("libpng initialization failed");
  }
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeFailure("failed writing PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Bilinear resize (pixel-center aligned).
inline Image8 resize_bilinear(const Image8& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  Image8 out(src.channels, height, width);
  const double sy = double(src.height) / height, sx = double(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.height - 1));
    const int y0 = int(fy), y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.width - 1));
      const int x0 = int(fx), x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                         wy * ((1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
        out.at(y, x, c) = std::uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

/// Nearest-neighbour resize, used for masks.
inline Mask resize_nearest(const Mask& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  Mask out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out.at(y, x) = src.at(std::min(src.height - 1, int((y + 0.5) * src.height / height)),
                            std::min(src.width - 1, int((x + 0.5) * src.width / width)));
  return out;
}

inline Image8 convert_channels(const Image8& src, int channels) {
  if (src.channels == channels) return src;
  Image8 out(channels, src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      if (channels == 1) {
        const double lum = 0.299 * src.at(y, x, 0) + 0.587 * src.at(y, x, 1) + 0.114 * src.at(y, x, 2);
        out.at(y, x, 0) = std::uint8_t(std::lround(lum));
      } else {
        for (int c = 0; c < channels; ++c) out.at(y, x, c) = src.at(y, x, 0);
      }
    }
  return out;
}

/// Planar (1, C, H, W) tensor with values in [0, 1].
inline Tensor to_tensor(const Image8& img) {
  Tensor t(1, img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t(0, c, y, x) = img.at(y, x, c) / 255.0;
  return t;
}

inline Image8 to_image8(const Tensor& t) {
  Image8 img(t.c(), t.h(), t.w());
  for (int c = 0; c < t.c(); ++c)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x)
        img.at(y, x, c) = std::uint8_t(std::lround(std::clamp(t(0, c, y, x), 0.0, 1.0) * 255.0));
  return img;
}

/// Any nonzero pixel in any channel marks the mask.
inline Mask to_mask(const Image8& img) {
  Mask m(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      bool on = false;
      for (int c = 0; c < img.channels; ++c) on |= img.at(y, x, c) > 127;
      m.at(y, x) = on;
    }
  return m;
}

inline Image8 mask_to_image8(const Mask& m) {
  Image8 img(1, m.height, m.width);
  for (std::size_t k = 0; k < m.values.size(); ++k) img.pixels[k] = m.values[k] ? 255 : 0;
  return img;
}

}  // namespace fcdd
