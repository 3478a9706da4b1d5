#pragma once

#include <cmath>
#include <vector>

#include "eac/errors.hpp"
#include "eac/tensor.hpp"

namespace eac {

inline constexpr double kLeakySlope = 0.01;

inline double leaky_relu(double x) { return x > 0.0 ? x : kLeakySlope * x; }

// 3x3 convolution, stride 1, zero padding 1. Weights are stored
// [out][in][ky][kx] row-major; evaluation order is fixed so results are
// reproducible bit for bit.
struct Conv3x3 {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;  // out*in*9
  std::vector<double> bias;     // out

  Conv3x3() = default;
  Conv3x3(int in_ch, int out_ch)
      : in_channels(in_ch), out_channels(out_ch),
        weights(static_cast<std::size_t>(in_ch) * out_ch * 9, 0.0),
        bias(static_cast<std::size_t>(out_ch), 0.0) {}

  std::size_t param_count() const { return weights.size() + bias.size(); }

  void check_shape() const {
    if (weights.size() != static_cast<std::size_t>(in_channels) * out_channels * 9 ||
        bias.size() != static_cast<std::size_t>(out_channels)) {
      throw InvalidWeights("conv3x3: weight blob does not match declared shape");
    }
    for (double w : weights) {
      if (!std::isfinite(w)) throw InvalidWeights("conv3x3: non-finite weight");
    }
    for (double b : bias) {
      if (!std::isfinite(b)) throw InvalidWeights("conv3x3: non-finite bias");
    }
  }

  RealGrid apply(const RealGrid& input) const {
    if (input.dims.channels != in_channels) {
      throw InvalidWeights("conv3x3: input has " +
                           std::to_string(input.dims.channels) +
                           " channels, kernel expects " +
                           std::to_string(in_channels));
    }
    const int H = input.dims.height;
    const int W = input.dims.width;
    RealGrid out(Dims{out_channels, H, W});
    for (int oc = 0; oc < out_channels; ++oc) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double acc = bias[static_cast<std::size_t>(oc)];
          for (int ic = 0; ic < in_channels; ++ic) {
            const std::size_t kbase =
                (static_cast<std::size_t>(oc) * in_channels + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
              const int sy = y + ky - 1;
              if (sy < 0 || sy >= H) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int sx = x + kx - 1;
                if (sx < 0 || sx >= W) continue;
                acc += weights[kbase + static_cast<std::size_t>(ky) * 3 + kx] *
                       input.at(ic, sy, sx);
              }
            }
          }
          out.at(oc, y, x) = acc;
        }
      }
    }
    return out;
  }
};

inline RealGrid leaky_relu(const RealGrid& g) {
  RealGrid out = g;
  for (double& v : out.values) v = leaky_relu(v);
  return out;
}

}  // namespace eac
