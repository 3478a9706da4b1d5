#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eac/errors.hpp"

namespace eac {

// 8-bit image, row-major, channel-interleaved (matches PPM sample order).
// channels is 1 (gray) or 3 (RGB).
struct PixelImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> samples;

  PixelImage() = default;
  PixelImage(int w, int h, int ch, uint8_t fill = 0)
      : width(w), height(h), channels(ch),
        samples(static_cast<std::size_t>(w) * h * ch, fill) {}

  uint8_t& at(int x, int y, int c) {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  bool same_shape(const PixelImage& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

namespace detail {

inline int pnm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next non-negative integer.
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    if (ch != EOF) ch = in.get();
  }
  if (ch == EOF) throw FormatError("pnm: truncated header");
  int value = 0;
  bool any = false;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    any = true;
    ch = in.get();
  }
  if (!any) throw FormatError("pnm: expected integer in header");
  return value;
}

}  // namespace detail

// Binary PGM (P5) / PPM (P6), maxval 255.
inline PixelImage read_pnm(std::istream& in) {
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw FormatError("pnm: not a binary PGM/PPM stream");
  }
  const int channels = kind == '5' ? 1 : 3;
  const int width = detail::pnm_next_token(in);
  const int height = detail::pnm_next_token(in);
  const int maxval = detail::pnm_next_token(in);
  if (width <= 0 || height <= 0) throw FormatError("pnm: bad dimensions");
  if (maxval != 255) throw FormatError("pnm: only maxval 255 supported");
  PixelImage img(width, height, channels);
  in.read(reinterpret_cast<char*>(img.samples.data()),
          static_cast<std::streamsize>(img.samples.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.samples.size())) {
    throw FormatError("pnm: truncated sample data");
  }
  return img;
}

inline void write_pnm(std::ostream& out, const PixelImage& img) {
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.samples.data()),
            static_cast<std::streamsize>(img.samples.size()));
}

inline PixelImage load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open image file: " + path);
  return read_pnm(f);
}

inline void save_image(const std::string& path, const PixelImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open image file for writing: " + path);
  write_pnm(f, img);
}

// Luma used wherever a single-channel view of a frame is needed
// (motion search, temporal features, the downsampling task head).
inline double luma(const PixelImage& img, int x, int y) {
  if (img.channels == 1) return img.at(x, y, 0);
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
         0.114 * img.at(x, y, 2);
}

}  // namespace eac
