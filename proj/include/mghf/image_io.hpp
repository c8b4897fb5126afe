#pragma once

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "mghf/errors.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// Image loading: 8-bit PNG (RGB or grayscale) and binary PPM (P6). Values
// scale to [0,1]; grayscale replicates to three channels. 16-bit inputs are
// rejected rather than silently truncated.

namespace detail {

inline Tensor interleaved_to_tensor(const std::vector<unsigned char>& px, int w, int h, int ch,
                                    double maxval) {
  Tensor t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = ch == 1 ? 0 : c;
        t.at(c, y, x) =
            px[(static_cast<std::size_t>(y) * w + x) * ch + src_c] / maxval;
      }
  return t;
}

}  // namespace detail

inline Tensor load_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("load_image: cannot open " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    std::fclose(fp);
    throw IoError("load_image: " + path + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("load_image: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("load_image: PNG decode failed for " + path);
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("load_image: " + path + " is 16-bit; only 8-bit images are supported");
  }
  if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("load_image: " + path +
                  ": only 8-bit grayscale or RGB PNG is supported (color type " +
                  std::to_string(color) + ", depth " + std::to_string(depth) + ")");
  }
  const int ch = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * ch);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return detail::interleaved_to_tensor(pixels, w, h, ch, 255.0);
}

inline Tensor load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_image: cannot open " + path);
  auto next_token = [&]() {
    std::string tok;
    int c;
    while ((c = f.get()) != EOF) {
      if (c == '#') {
        while ((c = f.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw IoError("load_image: " + path + ": truncated PPM header");
    return tok;
  };
  if (next_token() != "P6") throw IoError("load_image: " + path + " is not a binary PPM (P6)");
  int w, h, maxval;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw IoError("load_image: " + path + ": malformed PPM header");
  }
  if (w < 1 || h < 1) throw IoError("load_image: " + path + ": bad PPM dimensions");
  if (maxval > 255)
    throw IoError("load_image: " + path + " is 16-bit; only 8-bit images are supported");
  if (maxval < 1) throw IoError("load_image: " + path + ": bad PPM maxval");

  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(pixels.size()))
    throw IoError("load_image: " + path + ": truncated PPM pixel data");
  return detail::interleaved_to_tensor(pixels, w, h, 3, static_cast<double>(maxval));
}

/// Dispatches on magic bytes, not on file extension.
inline Tensor load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("load_image: cannot open " + path);
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  const bool full_sig = probe.gcount() == 8;
  probe.close();
  if (full_sig && png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
  throw IoError("load_image: " + path + ": unrecognized format (expected PNG or PPM P6)");
}

/// Quantizes to 8 bits and writes a binary PPM.
inline void save_ppm(const std::string& path, const Tensor& img) {
  if (img.channels != 3) throw ArgumentError("save_ppm: need a 3-channel tensor");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_ppm: cannot open " + path + " for writing");
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(1.0, std::max(0.0, img.at(c, y, x)));
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("save_ppm: short write to " + path);
}

}  // namespace mghf
