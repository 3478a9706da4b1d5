#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "eac/errors.hpp"
#include "eac/image.hpp"
#include "eac/tensor.hpp"

namespace eac {

// Blockwise 8x8 orthonormal type-II DCT. Each block's 64 coefficients become
// 64 latent channels: pixel channel ic, frequency (u, v) -> latent channel
// ic*64 + u*8 + v, at spatial position (block row, block column). The
// transform is exactly orthonormal, so synthesis(analysis(x)) reproduces x up
// to floating-point rounding when no quantization happens in between.

inline constexpr int kDctBlock = 8;

namespace detail {

struct DctBasis {
  std::array<std::array<double, kDctBlock>, kDctBlock> b;  // b[u][k]
  DctBasis() {
    const double pi = std::acos(-1.0);
    for (int u = 0; u < kDctBlock; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / kDctBlock)
                                  : std::sqrt(2.0 / kDctBlock);
      for (int k = 0; k < kDctBlock; ++k) {
        b[u][k] = alpha * std::cos(pi * (2 * k + 1) * u / (2 * kDctBlock));
      }
    }
  }
};

inline const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

// forward: Y = B X B^T; inverse: X = B^T Y B
inline void dct2d(const double in[kDctBlock][kDctBlock],
                  double out[kDctBlock][kDctBlock], bool forward) {
  const auto& b = dct_basis().b;
  double tmp[kDctBlock][kDctBlock];
  for (int u = 0; u < kDctBlock; ++u) {
    for (int k = 0; k < kDctBlock; ++k) {
      double acc = 0.0;
      for (int j = 0; j < kDctBlock; ++j) {
        acc += (forward ? b[u][j] : b[j][u]) * in[j][k];
      }
      tmp[u][k] = acc;
    }
  }
  for (int u = 0; u < kDctBlock; ++u) {
    for (int v = 0; v < kDctBlock; ++v) {
      double acc = 0.0;
      for (int j = 0; j < kDctBlock; ++j) {
        acc += tmp[u][j] * (forward ? b[v][j] : b[j][v]);
      }
      out[u][v] = acc;
    }
  }
}

}  // namespace detail

inline int padded_extent(int x) { return (x + kDctBlock - 1) / kDctBlock * kDctBlock; }

// pixels: {channels, h, w} real grid in the pixel domain (any origin).
// Output: {channels*64, ceil(h/8), ceil(w/8)} coefficients divided by q.
// Edges are padded by replication before the transform.
inline RealGrid dct_analysis(const RealGrid& pixels, double q) {
  if (!(q > 0.0)) throw InvalidInput("dct_analysis: q must be positive");
  const int ch = pixels.dims.channels;
  const int h = pixels.dims.height;
  const int w = pixels.dims.width;
  const int bh = padded_extent(h) / kDctBlock;
  const int bw = padded_extent(w) / kDctBlock;
  RealGrid latent(Dims{ch * kDctBlock * kDctBlock, bh, bw});
  double block[kDctBlock][kDctBlock];
  double coef[kDctBlock][kDctBlock];
  for (int c = 0; c < ch; ++c) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        for (int y = 0; y < kDctBlock; ++y) {
          const int sy = std::min(by * kDctBlock + y, h - 1);
          for (int x = 0; x < kDctBlock; ++x) {
            const int sx = std::min(bx * kDctBlock + x, w - 1);
            block[y][x] = pixels.at(c, sy, sx);
          }
        }
        detail::dct2d(block, coef, true);
        for (int u = 0; u < kDctBlock; ++u) {
          for (int v = 0; v < kDctBlock; ++v) {
            latent.at(c * 64 + u * kDctBlock + v, by, bx) = coef[u][v] / q;
          }
        }
      }
    }
  }
  return latent;
}

// Inverse of dct_analysis, cropped to (out_h, out_w).
inline RealGrid dct_synthesis(const RealGrid& latent, double q, int out_h,
                              int out_w) {
  if (!(q > 0.0)) throw InvalidInput("dct_synthesis: q must be positive");
  if (latent.dims.channels % 64 != 0) {
    throw InvalidInput("dct_synthesis: latent channels not a multiple of 64");
  }
  const int ch = latent.dims.channels / 64;
  const int bh = latent.dims.height;
  const int bw = latent.dims.width;
  if (bh * kDctBlock < out_h || bw * kDctBlock < out_w) {
    throw InvalidInput("dct_synthesis: latent too small for requested dims");
  }
  RealGrid pixels(Dims{ch, out_h, out_w});
  double block[kDctBlock][kDctBlock];
  double coef[kDctBlock][kDctBlock];
  for (int c = 0; c < ch; ++c) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        for (int u = 0; u < kDctBlock; ++u) {
          for (int v = 0; v < kDctBlock; ++v) {
            coef[u][v] = latent.at(c * 64 + u * kDctBlock + v, by, bx) * q;
          }
        }
        detail::dct2d(coef, block, false);
        for (int y = 0; y < kDctBlock; ++y) {
          const int sy = by * kDctBlock + y;
          if (sy >= out_h) break;
          for (int x = 0; x < kDctBlock; ++x) {
            const int sx = bx * kDctBlock + x;
            if (sx >= out_w) break;
            pixels.at(c, sy, sx) = block[y][x];
          }
        }
      }
    }
  }
  return pixels;
}

// Image-domain wrappers: samples are centered by -128 before the transform
// and restored, rounded and clamped on the way back.
inline RealGrid analysis(const PixelImage& img, double q) {
  RealGrid centered(Dims{img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        centered.at(c, y, x) = static_cast<double>(img.at(x, y, c)) - 128.0;
      }
    }
  }
  return dct_analysis(centered, q);
}

inline PixelImage synthesis(const RealGrid& latent, double q, int out_w,
                            int out_h, int channels) {
  const RealGrid pixels = dct_synthesis(latent, q, out_h, out_w);
  if (pixels.dims.channels != channels) {
    throw InvalidInput("synthesis: channel count mismatch");
  }
  PixelImage img(out_w, out_h, channels);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const int v = round_half_away(pixels.at(c, y, x) + 128.0);
        img.at(x, y, c) = static_cast<uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return img;
}

}  // namespace eac
