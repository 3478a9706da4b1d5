#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eac/errors.hpp"

namespace eac {

inline constexpr int kValueMin = -127;
inline constexpr int kValueMax = 127;

struct Dims {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Dims&) const = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.channels) + "x" + std::to_string(d.height) + "x" +
         std::to_string(d.width);
}

// Flat position of (c, h, w) under the fixed channel-major order used on both
// the encoder and decoder side.
inline std::size_t flatten_index(int c, int h, int w, const Dims& dims) {
  if (c < 0 || c >= dims.channels || h < 0 || h >= dims.height || w < 0 ||
      w >= dims.width) {
    throw IndexError("flatten_index: (" + std::to_string(c) + "," +
                     std::to_string(h) + "," + std::to_string(w) +
                     ") out of range for " + to_string(dims));
  }
  return (static_cast<std::size_t>(c) * dims.height + h) * dims.width + w;
}

// Real-valued grid with latent layout; input of quantize, output of the
// analysis transform and of aggregation.
struct RealGrid {
  Dims dims;
  std::vector<double> values;

  RealGrid() = default;
  explicit RealGrid(const Dims& d, double fill = 0.0)
      : dims(d), values(d.count(), fill) {}

  double& at(int c, int h, int w) { return values[flatten_index(c, h, w, dims)]; }
  double at(int c, int h, int w) const { return values[flatten_index(c, h, w, dims)]; }
};

// Integer-quantized latent; every value in [-127, 127], channel-major.
struct LatentTensor {
  Dims dims;
  std::vector<int16_t> values;

  LatentTensor() = default;
  explicit LatentTensor(const Dims& d) : dims(d), values(d.count(), 0) {}

  int16_t& at(int c, int h, int w) { return values[flatten_index(c, h, w, dims)]; }
  int16_t at(int c, int h, int w) const { return values[flatten_index(c, h, w, dims)]; }
};

// Round half away from zero, the convention fixed for the whole codebase.
inline int round_half_away(double x) {
  return static_cast<int>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

inline int16_t clamp_value(int v) {
  if (v < kValueMin) return kValueMin;
  if (v > kValueMax) return kValueMax;
  return static_cast<int16_t>(v);
}

inline LatentTensor quantize(const RealGrid& real) {
  LatentTensor out(real.dims);
  for (std::size_t i = 0; i < real.values.size(); ++i) {
    const double x = real.values[i];
    if (!std::isfinite(x)) {
      throw InvalidInput("quantize: non-finite value at flat index " +
                         std::to_string(i));
    }
    out.values[i] = clamp_value(round_half_away(x));
  }
  return out;
}

// Binary keep mask over one latent; layer_index is 1-based.
struct LayerMask {
  Dims dims;
  int layer_index = 1;
  std::vector<uint8_t> bits;

  LayerMask() = default;
  LayerMask(const Dims& d, int index) : dims(d), layer_index(index), bits(d.count(), 0) {}

  std::size_t popcount() const {
    std::size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
};

// Ordered, pairwise-disjoint masks whose union covers the latent. Machine
// task i consumes the union of masks 1..i; the full union reconstructs the
// latent exactly for human vision.
struct MaskSet {
  std::vector<LayerMask> masks;

  int layer_count() const { return static_cast<int>(masks.size()); }

  void validate(const Dims& dims) const {
    if (masks.empty()) throw InvalidMaskSet("MaskSet: no layers");
    std::vector<uint8_t> seen(dims.count(), 0);
    for (const auto& m : masks) {
      if (!(m.dims == dims)) {
        throw InvalidMaskSet("MaskSet: mask dims " + to_string(m.dims) +
                             " != latent dims " + to_string(dims));
      }
      for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (m.bits[i] > 1) throw InvalidMaskSet("MaskSet: non-binary bit");
        if (m.bits[i] && seen[i]++) {
          throw InvalidMaskSet("MaskSet: masks overlap at flat index " +
                               std::to_string(i));
        }
      }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) {
        throw InvalidMaskSet("MaskSet: flat index " + std::to_string(i) +
                             " uncovered");
      }
    }
  }
};

}  // namespace eac
