#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "eac/bytes.hpp"
#include "eac/conv.hpp"
#include "eac/errors.hpp"
#include "eac/gaussian.hpp"
#include "eac/image.hpp"
#include "eac/rng.hpp"
#include "eac/tensor.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// Mask prediction, latent partitioning, 1D->3D reconstruction and mean-fill
// aggregation. Masks are never transmitted: both sides derive them from the
// decoded side info (plus temporal features for video), so everything here is
// exact integer/double arithmetic with fully pinned tie-breaking.
// ---------------------------------------------------------------------------

enum class PredictorKind : uint8_t {
  kSigmaTopK = 0,
  kConvGumbel = 1,
};

enum class InferenceMode : uint8_t {
  kArgmax = 0,  // deterministic, required on bitstream-producing paths
  kSample = 1,  // Gumbel sampling, tuning experiments only
};

inline constexpr int kPredictorHidden = 16;
inline constexpr uint32_t kKeepOne = 1u << 16;  // keep fraction denominator

// Keep fractions are fixed-point with denominator 2^16 so the encoder and the
// decoder compute identical top-k counts. value() is in (0, 1].
struct KeepFraction {
  uint32_t units = kKeepOne;  // in [1, 65536]

  static KeepFraction from_double(double keep) {
    if (!(keep > 0.0) || keep > 1.0) {
      throw InvalidInput("keep fraction must be in (0, 1]");
    }
    const double scaled = keep * kKeepOne;
    const uint32_t q = static_cast<uint32_t>(
        std::clamp<long long>(round_half_away(scaled), 1, kKeepOne));
    return KeepFraction{q};
  }
  double value() const { return static_cast<double>(units) / kKeepOne; }

  // ceil(keep * n) in exact integer arithmetic
  std::size_t count_of(std::size_t n) const {
    const unsigned long long prod = static_cast<unsigned long long>(units) * n;
    return static_cast<std::size_t>((prod + kKeepOne - 1) >> 16);
  }
};

// Three 3x3 convolutions with two leaky-ReLU layers in between. Input is
// mu and sigma stacked channel-wise (2C) plus F temporal feature channels;
// output holds two logits per latent element: channel 2c is the drop logit
// and 2c+1 the keep logit of latent channel c.
struct ConvPredictorWeights {
  uint8_t mode = 0;          // 0 image, 1 video
  int latent_channels = 0;   // C
  int temporal_channels = 0; // F (0 in image mode)
  Conv3x3 conv1, conv2, conv3;

  static ConvPredictorWeights zeros(int latent_ch, int temporal_ch) {
    ConvPredictorWeights w;
    w.mode = temporal_ch > 0 ? 1 : 0;
    w.latent_channels = latent_ch;
    w.temporal_channels = temporal_ch;
    w.conv1 = Conv3x3(2 * latent_ch + temporal_ch, kPredictorHidden);
    w.conv2 = Conv3x3(kPredictorHidden, kPredictorHidden);
    w.conv3 = Conv3x3(kPredictorHidden, 2 * latent_ch);
    return w;
  }

  static ConvPredictorWeights random(int latent_ch, int temporal_ch, Rng& rng,
                                     double scale = 0.1) {
    ConvPredictorWeights w = zeros(latent_ch, temporal_ch);
    for (auto* conv : {&w.conv1, &w.conv2, &w.conv3}) {
      for (double& v : conv->weights) v = rng.next_gaussian() * scale;
      for (double& v : conv->bias) v = rng.next_gaussian() * scale;
    }
    return w;
  }

  void validate() const {
    if (latent_channels < 1) throw InvalidWeights("predictor: C < 1");
    if (temporal_channels < 0 || (mode == 0 && temporal_channels != 0)) {
      throw InvalidWeights("predictor: bad temporal channel count");
    }
    if (conv1.in_channels != 2 * latent_channels + temporal_channels ||
        conv1.out_channels != kPredictorHidden ||
        conv2.in_channels != kPredictorHidden ||
        conv2.out_channels != kPredictorHidden ||
        conv3.in_channels != kPredictorHidden ||
        conv3.out_channels != 2 * latent_channels) {
      throw InvalidWeights("predictor: conv shapes do not match declared C/F");
    }
    conv1.check_shape();
    conv2.check_shape();
    conv3.check_shape();
  }

  std::size_t param_count() const {
    return conv1.param_count() + conv2.param_count() + conv3.param_count();
  }
};

struct PredictorConfig {
  PredictorKind kind = PredictorKind::kSigmaTopK;
  std::vector<KeepFraction> keep;  // layers 1..n-1 (sigma-topk)
  std::shared_ptr<const ConvPredictorWeights> weights;  // conv-gumbel
  double tau = 1.0;  // Gumbel temperature (sampling only)
  InferenceMode inference = InferenceMode::kArgmax;

  void validate(int n_layers) const {
    if (n_layers < 1) throw InvalidInput("predictor config: n < 1");
    if (kind == PredictorKind::kSigmaTopK) {
      if (static_cast<int>(keep.size()) < n_layers - 1) {
        throw InvalidInput("predictor config: need a keep fraction per layer 1..n-1");
      }
      uint64_t total = 0;
      for (int i = 0; i < n_layers - 1; ++i) total += keep[static_cast<std::size_t>(i)].units;
      if (total > kKeepOne) {
        throw InvalidInput("predictor config: keep fractions sum above 1");
      }
    } else {
      if (!weights) throw InvalidWeights("predictor config: missing conv weights");
      weights->validate();
      if (!(tau > 0.0)) throw InvalidInput("predictor config: tau must be > 0");
    }
  }
};

namespace detail {

// Conv stack applied to (mu || sigma || temporal) masked to the remainder;
// temporal channels are gated by the spatial projection of the remainder.
inline RealGrid predictor_logits(const GaussianField& field,
                                 const std::optional<RealGrid>& temporal,
                                 const ConvPredictorWeights& w,
                                 const std::vector<uint8_t>& remaining) {
  const Dims& dims = field.dims;
  const int C = dims.channels;
  const int F = w.temporal_channels;
  if (w.latent_channels != C) {
    throw InvalidWeights("predictor: weights built for C=" +
                         std::to_string(w.latent_channels) + ", latent has C=" +
                         std::to_string(C));
  }
  if (F > 0) {
    if (!temporal) throw InvalidWeights("predictor: temporal features required");
    if (temporal->dims.channels != F || temporal->dims.height != dims.height ||
        temporal->dims.width != dims.width) {
      throw InvalidWeights("predictor: temporal feature dims mismatch");
    }
  }
  RealGrid input(Dims{2 * C + F, dims.height, dims.width});
  for (int c = 0; c < C; ++c) {
    for (int h = 0; h < dims.height; ++h) {
      for (int x = 0; x < dims.width; ++x) {
        const std::size_t i = flatten_index(c, h, x, dims);
        const double keep = remaining[i] ? 1.0 : 0.0;
        input.at(c, h, x) = field.mu[i] * keep;
        input.at(C + c, h, x) = field.sigma[i] * keep;
      }
    }
  }
  if (F > 0) {
    for (int h = 0; h < dims.height; ++h) {
      for (int x = 0; x < dims.width; ++x) {
        bool any = false;
        for (int c = 0; c < C && !any; ++c) {
          any = remaining[flatten_index(c, h, x, dims)] != 0;
        }
        for (int f = 0; f < F; ++f) {
          input.at(2 * C + f, h, x) = any ? temporal->at(f, h, x) : 0.0;
        }
      }
    }
  }
  return w.conv3.apply(leaky_relu(w.conv2.apply(leaky_relu(w.conv1.apply(input)))));
}

inline void select_conv_layer(const GaussianField& field,
                              const std::optional<RealGrid>& temporal,
                              const ConvPredictorWeights& w,
                              const std::vector<uint8_t>& remaining,
                              InferenceMode inference, double tau, Rng* rng,
                              std::vector<uint8_t>& selected) {
  const Dims& dims = field.dims;
  const RealGrid logits = predictor_logits(field, temporal, w, remaining);
  selected.assign(dims.count(), 0);
  for (int c = 0; c < dims.channels; ++c) {
    for (int h = 0; h < dims.height; ++h) {
      for (int x = 0; x < dims.width; ++x) {
        const std::size_t i = flatten_index(c, h, x, dims);
        if (!remaining[i]) continue;
        double drop = logits.at(2 * c, h, x);
        double keepl = logits.at(2 * c + 1, h, x);
        if (inference == InferenceMode::kSample) {
          // Hard Gumbel-softmax draw: the argmax of the tempered softmax over
          // Gumbel-perturbed logits.
          drop = (drop + rng->next_gumbel()) / tau;
          keepl = (keepl + rng->next_gumbel()) / tau;
        }
        // Ties go to class 0 (drop): keep only on a strictly larger logit.
        if (keepl > drop) selected[i] = 1;
      }
    }
  }
}

}  // namespace detail

// Partitions the element index space into n disjoint, covering masks.
//
// sigma-topk: layer 1 keeps the ceil(keep_1*N) largest-sigma elements, layer i
// the next ceil(keep_i*N) among what remains, layer n all the rest. Ties on
// sigma resolve to the lower flat index.
//
// conv-gumbel: layers 1..n-1 each run the conv stack on the remainder-masked
// field; argmax keeps elements whose keep logit strictly exceeds the drop
// logit, sampling perturbs the logits with Gumbel noise first. Layer n takes
// the remainder. Only argmax may feed a bitstream (sampled masks cannot be
// re-derived by the decoder).
inline MaskSet predict_masks(const GaussianField& field,
                             const std::optional<RealGrid>& temporal,
                             const PredictorConfig& cfg, int n,
                             Rng* rng = nullptr) {
  if (n < 1) throw InvalidInput("predict_masks: n < 1");
  cfg.validate(n);
  const Dims& dims = field.dims;
  const std::size_t N = dims.count();

  MaskSet set;
  set.masks.reserve(static_cast<std::size_t>(n));
  std::vector<uint8_t> remaining(N, 1);
  std::size_t remaining_count = N;

  if (cfg.kind == PredictorKind::kSigmaTopK) {
    std::vector<uint32_t> order(N);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
      if (field.sigma[a] != field.sigma[b]) return field.sigma[a] > field.sigma[b];
      return a < b;
    });
    std::size_t cursor = 0;
    for (int layer = 1; layer < n; ++layer) {
      LayerMask mask(dims, layer);
      std::size_t want =
          std::min(cfg.keep[static_cast<std::size_t>(layer - 1)].count_of(N),
                   remaining_count);
      while (want > 0) {
        const uint32_t idx = order[cursor++];
        mask.bits[idx] = 1;
        remaining[idx] = 0;
        --remaining_count;
        --want;
      }
      set.masks.push_back(std::move(mask));
    }
  } else {
    if (cfg.inference == InferenceMode::kSample && rng == nullptr) {
      throw InvalidInput("predict_masks: sampling requires an RNG");
    }
    std::vector<uint8_t> selected;
    for (int layer = 1; layer < n; ++layer) {
      detail::select_conv_layer(field, temporal, *cfg.weights, remaining,
                                cfg.inference, cfg.tau, rng, selected);
      LayerMask mask(dims, layer);
      for (std::size_t i = 0; i < N; ++i) {
        if (selected[i]) {
          mask.bits[i] = 1;
          remaining[i] = 0;
          --remaining_count;
        }
      }
      set.masks.push_back(std::move(mask));
    }
  }

  LayerMask last(dims, n);
  for (std::size_t i = 0; i < N; ++i) last.bits[i] = remaining[i];
  set.masks.push_back(std::move(last));
  return set;
}

// Subset i listed in ascending flat-index order; the concatenation of all
// sequences is a permutation of the latent values.
inline std::vector<std::vector<int16_t>> partition(const LatentTensor& latent,
                                                   const MaskSet& masks) {
  masks.validate(latent.dims);
  std::vector<std::vector<int16_t>> sequences(masks.masks.size());
  for (std::size_t layer = 0; layer < masks.masks.size(); ++layer) {
    const auto& mask = masks.masks[layer];
    auto& seq = sequences[layer];
    seq.reserve(mask.popcount());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
      if (mask.bits[i]) seq.push_back(latent.values[i]);
    }
  }
  return sequences;
}

// Places sequence element k at the k-th smallest flat index with mask=1;
// everything off-mask is zero.
inline LatentTensor reconstruct(const std::vector<int16_t>& seq,
                                const LayerMask& mask) {
  if (seq.size() != mask.popcount()) {
    throw InvalidInput("reconstruct: sequence length " +
                       std::to_string(seq.size()) + " != mask popcount " +
                       std::to_string(mask.popcount()));
  }
  LatentTensor out(mask.dims);
  std::size_t k = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) out.values[i] = seq[k++];
  }
  return out;
}

// Element-wise sum of the decoded layers with the predicted mean filled in
// wherever no layer of the prefix covers the element. The mean stays
// real-valued: the result feeds the synthesis transform directly.
inline RealGrid aggregate(const std::vector<LatentTensor>& layers,
                          const std::vector<LayerMask>& masks,
                          const GaussianField& field) {
  if (layers.size() != masks.size()) {
    throw InvalidInput("aggregate: layer/mask count mismatch");
  }
  RealGrid out(field.dims);
  std::vector<uint8_t> covered(field.dims.count(), 0);
  for (std::size_t layer = 0; layer < layers.size(); ++layer) {
    if (!(layers[layer].dims == field.dims) || !(masks[layer].dims == field.dims)) {
      throw InvalidInput("aggregate: dims disagree");
    }
    const auto& mask = masks[layer];
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
      if (mask.bits[i]) {
        out.values[i] += layers[layer].values[i];
        covered[i] = 1;
      }
    }
  }
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (!covered[i]) out.values[i] = field.mu[i];
  }
  return out;
}

// Four feature channels per 8x8 pixel block of the previous reconstruction,
// at latent resolution: mean luma, mean horizontal gradient, mean vertical
// gradient, luma variance. This is the temporal input of the video-mode
// predictors.
inline constexpr int kTemporalChannels = 4;

inline RealGrid temporal_features(const PixelImage& frame, int grid_h, int grid_w) {
  const int h = frame.height;
  const int w = frame.width;
  if (grid_h != (h + 7) / 8 || grid_w != (w + 7) / 8) {
    throw InvalidInput("temporal_features: grid does not match frame dims");
  }
  std::vector<double> gray(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gray[static_cast<std::size_t>(y) * w + x] = luma(frame, x, y);
    }
  }
  auto g = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return gray[static_cast<std::size_t>(y) * w + x];
  };

  RealGrid feat(Dims{kTemporalChannels, grid_h, grid_w});
  for (int by = 0; by < grid_h; ++by) {
    for (int bx = 0; bx < grid_w; ++bx) {
      const int y0 = by * 8, y1 = std::min(y0 + 8, h);
      const int x0 = bx * 8, x1 = std::min(x0 + 8, w);
      double sum = 0, sum_sq = 0, sum_gx = 0, sum_gy = 0;
      int count = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double v = g(x, y);
          sum += v;
          sum_sq += v * v;
          sum_gx += (g(x + 1, y) - g(x - 1, y)) * 0.5;
          sum_gy += (g(x, y + 1) - g(x, y - 1)) * 0.5;
          ++count;
        }
      }
      const double mean = sum / count;
      feat.at(0, by, bx) = mean;
      feat.at(1, by, bx) = sum_gx / count;
      feat.at(2, by, bx) = sum_gy / count;
      feat.at(3, by, bx) = std::max(0.0, sum_sq / count - mean * mean);
    }
  }
  return feat;
}

// ---------------------------------------------------------------------------
// EACW weight file envelope (shared with the task adapters, which use mode
// bytes 2/3): magic, version, mode, C (u16), F (u8), then the kernels and
// biases of each convolution in declaration order as little-endian f32,
// weights [out][in][ky][kx] row-major followed by the bias vector.
// ---------------------------------------------------------------------------

inline constexpr uint8_t kWeightsPredictorImage = 0;
inline constexpr uint8_t kWeightsPredictorVideo = 1;
inline constexpr uint8_t kWeightsAdapterImage = 2;
inline constexpr uint8_t kWeightsAdapterVideo = 3;

namespace detail {

inline void write_conv(ByteWriter& out, const Conv3x3& conv) {
  for (double v : conv.weights) out.f32(static_cast<float>(v));
  for (double v : conv.bias) out.f32(static_cast<float>(v));
}

inline void read_conv(ByteReader& in, Conv3x3& conv) {
  for (double& v : conv.weights) v = in.f32();
  for (double& v : conv.bias) v = in.f32();
}

}  // namespace detail

inline std::vector<uint8_t> serialize_predictor_weights(
    const ConvPredictorWeights& w) {
  w.validate();
  ByteWriter out;
  out.tag("EACW");
  out.u8(1);
  out.u8(w.mode == 0 ? kWeightsPredictorImage : kWeightsPredictorVideo);
  out.u16(static_cast<uint16_t>(w.latent_channels));
  out.u8(static_cast<uint8_t>(w.temporal_channels));
  detail::write_conv(out, w.conv1);
  detail::write_conv(out, w.conv2);
  detail::write_conv(out, w.conv3);
  return out.take();
}

inline ConvPredictorWeights deserialize_predictor_weights(
    const std::vector<uint8_t>& bytes) {
  ByteReader in(bytes);
  in.expect_tag("EACW", "weights file");
  if (in.u8() != 1) throw FormatError("weights file: unsupported version");
  const uint8_t mode = in.u8();
  if (mode != kWeightsPredictorImage && mode != kWeightsPredictorVideo) {
    throw FormatError("weights file: not a predictor weight file");
  }
  const int C = in.u16();
  const int F = in.u8();
  ConvPredictorWeights w = ConvPredictorWeights::zeros(C, F);
  w.mode = mode;
  detail::read_conv(in, w.conv1);
  detail::read_conv(in, w.conv2);
  detail::read_conv(in, w.conv3);
  if (in.remaining() != 0) throw FormatError("weights file: trailing bytes");
  w.validate();
  return w;
}

}  // namespace eac
