#pragma once

#include <optional>
#include <vector>

#include "eac/adaptive_codec.hpp"
#include "eac/dct.hpp"
#include "eac/image.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// Still-image path: blockwise DCT analysis with a quality divisor around the
// adaptive compression stack. Decoding a prefix of i layers mean-fills the
// rest of the latent before synthesis; decoding all n layers recovers the
// quantized latent exactly, so human-vision quality depends on q alone.
// ---------------------------------------------------------------------------

// The quality divisor travels in the header as fixed point with step 1/16;
// the encoder works with the quantized value so both sides agree exactly.
inline uint16_t quantize_q16(double q) {
  if (!(q > 0.0)) throw InvalidInput("quality q must be positive");
  const double scaled = q * 16.0;
  if (scaled > 65535.0) throw InvalidInput("quality q too large (max 4095.9)");
  const int units = std::max(1, round_half_away(scaled));
  return static_cast<uint16_t>(units);
}

struct ImageEncodeConfig {
  int n_layers = 1;
  double q = 8.0;
  PredictorConfig predictor;
  ContainerMode mode = ContainerMode::kImage;  // kVideoIntra inside sequences
  uint8_t extra_flags = 0;
};

inline AdaptiveEncodeResult encode_image(const PixelImage& img,
                                         const ImageEncodeConfig& cfg) {
  if (img.width < 1 || img.height < 1 ||
      (img.channels != 1 && img.channels != 3)) {
    throw InvalidInput("encode_image: need a non-empty gray or RGB image");
  }
  if (img.width > 0xFFFF || img.height > 0xFFFF) {
    throw InvalidInput("encode_image: image dims exceed container fields");
  }
  const uint16_t q16 = quantize_q16(cfg.q);
  const double q = q16 / 16.0;
  const LatentTensor latent = quantize(analysis(img, q));

  AdaptiveEncodeParams p;
  p.mode = cfg.mode;
  p.flags = cfg.extra_flags;
  p.pixel_channels = static_cast<uint8_t>(img.channels);
  p.orig_width = static_cast<uint16_t>(img.width);
  p.orig_height = static_cast<uint16_t>(img.height);
  p.q16 = q16;
  p.n_layers = cfg.n_layers;
  p.predictor = cfg.predictor;
  return encode_latent_adaptive(latent, p);
}

// layers_upto = -1 decodes the full layer set (human vision).
inline PixelImage decode_image(const std::vector<uint8_t>& bytes,
                               int layers_upto = -1,
                               const ConvPredictorWeights* weights = nullptr) {
  const AdaptiveDecodeResult dec =
      decode_latent_adaptive(bytes, layers_upto, weights);
  if (dec.header.mode != ContainerMode::kImage &&
      dec.header.mode != ContainerMode::kVideoIntra) {
    throw FormatError("decode_image: container is not an image/intra stream");
  }
  return synthesis(dec.aggregated, dec.header.q(), dec.header.orig_width,
                   dec.header.orig_height, dec.header.pixel_channels);
}

}  // namespace eac
