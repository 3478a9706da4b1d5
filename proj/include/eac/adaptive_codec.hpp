#pragma once

#include <optional>
#include <vector>

#include "eac/container.hpp"
#include "eac/gaussian.hpp"
#include "eac/partition.hpp"
#include "eac/range_coder.hpp"
#include "eac/tensor.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// The adaptive compression stack shared by the image pipeline and the video
// motion/residual paths: side info -> model -> masks -> partition -> per-layer
// range coding -> container, and the exact mirror on the way back. The
// decoder re-derives masks from the decoded side info (argmax inference only),
// so the two sides stay bit-identical by construction.
// ---------------------------------------------------------------------------

// Per-element quantities derived deterministically from the side info on both
// sides: the expanded (mu, sigma) field, each element's sigma bin, and the
// rounded mean that centers the coded residuals.
struct CodingModel {
  GaussianField field;
  std::vector<uint8_t> sigma_idx;
  std::vector<int> mu_round;
};

inline CodingModel build_coding_model(const SideInfo& side) {
  CodingModel model;
  model.field = expand_side_info(side, side.dims);
  const Dims& dims = side.dims;
  model.sigma_idx.resize(dims.count());
  model.mu_round.resize(dims.count());
  const int bh = side.blocks_h();
  const int bw = side.blocks_w();
  for (int c = 0; c < dims.channels; ++c) {
    for (int h = 0; h < dims.height; ++h) {
      for (int w = 0; w < dims.width; ++w) {
        const auto& rec =
            side.records[(static_cast<std::size_t>(c) * bh + h / kSideBlock) * bw +
                         w / kSideBlock];
        const std::size_t i = flatten_index(c, h, w, dims);
        model.sigma_idx[i] = rec.sigma_idx;
        model.mu_round[i] = round_half_away(rec.mu_q * kMuStep);
      }
    }
  }
  return model;
}

// Entropy-codes the masked elements in ascending flat order as residuals
// centered on the rounded block mean, one static table per sigma bin.
inline Payload encode_layer(const LatentTensor& latent, const LayerMask& mask,
                            const CodingModel& model) {
  std::vector<int> symbols;
  std::vector<const CdfTable*> tables;
  symbols.reserve(mask.popcount());
  tables.reserve(symbols.capacity());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    symbols.push_back(latent.values[i] - model.mu_round[i]);
    tables.push_back(&cdf_for_sigma(model.sigma_idx[i]));
  }
  return encode_symbols(symbols, tables);
}

inline LatentTensor decode_layer(const Payload& payload, const LayerMask& mask,
                                 const CodingModel& model) {
  std::vector<const CdfTable*> tables;
  std::vector<std::size_t> positions;
  tables.reserve(mask.popcount());
  positions.reserve(mask.popcount());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    tables.push_back(&cdf_for_sigma(model.sigma_idx[i]));
    positions.push_back(i);
  }
  const std::vector<int> symbols = decode_symbols(payload, tables.size(), tables);
  LatentTensor out(mask.dims);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    out.values[positions[k]] = static_cast<int16_t>(
        symbols[k] + model.mu_round[positions[k]]);
  }
  return out;
}

struct AdaptiveEncodeResult {
  std::vector<uint8_t> bytes;
  ContainerHeader header;
  SideInfo side;
  MaskSet masks;
  std::vector<double> estimated_bits;  // model estimate per layer
};

struct AdaptiveEncodeParams {
  ContainerMode mode = ContainerMode::kImage;
  uint8_t flags = 0;
  uint8_t pixel_channels = 1;
  uint16_t orig_width = 0;
  uint16_t orig_height = 0;
  uint16_t q16 = 16;
  int n_layers = 1;
  PredictorConfig predictor;
  std::optional<RealGrid> temporal;
};

inline AdaptiveEncodeResult encode_latent_adaptive(const LatentTensor& latent,
                                                   const AdaptiveEncodeParams& p) {
  if (p.predictor.inference != InferenceMode::kArgmax) {
    throw InvalidInput(
        "encode: sampled masks cannot be re-derived by the decoder; "
        "bitstream paths require argmax inference");
  }
  if (latent.dims.channels > 0xFFFF || latent.dims.height > 0xFFFF ||
      latent.dims.width > 0xFFFF) {
    throw InvalidInput("encode: latent dims exceed the container's u16 fields");
  }
  AdaptiveEncodeResult result;
  result.side = extract_side_info(latent);
  const CodingModel model = build_coding_model(result.side);
  result.masks = predict_masks(model.field, p.temporal, p.predictor, p.n_layers);

  std::vector<Payload> payloads;
  payloads.reserve(result.masks.masks.size());
  for (const auto& mask : result.masks.masks) {
    payloads.push_back(encode_layer(latent, mask, model));
    result.estimated_bits.push_back(estimate_rate(latent, model.field, mask));
  }

  ContainerHeader& h = result.header;
  h.mode = p.mode;
  h.flags = p.flags;
  h.pixel_channels = p.pixel_channels;
  h.latent = latent.dims;
  h.orig_width = p.orig_width;
  h.orig_height = p.orig_height;
  h.q16 = p.q16;
  h.n_layers = static_cast<uint8_t>(p.n_layers);
  h.predictor_kind = p.predictor.kind;
  if (p.predictor.kind == PredictorKind::kSigmaTopK) {
    for (int i = 0; i < p.n_layers - 1; ++i) {
      h.keep_q_minus1.push_back(static_cast<uint16_t>(
          p.predictor.keep[static_cast<std::size_t>(i)].units - 1));
    }
  } else {
    h.keep_q_minus1.assign(static_cast<std::size_t>(p.n_layers) - 1, 0);
    h.weights_crc = crc32(serialize_predictor_weights(*p.predictor.weights));
  }
  for (const auto& payload : payloads) {
    h.payload_lengths.push_back(static_cast<uint32_t>(payload.bytes.size()));
  }
  const std::vector<uint8_t> side_bytes = serialize_side_info(result.side);
  h.side_length = static_cast<uint32_t>(side_bytes.size());

  result.bytes = write_container(h, side_bytes, payloads);
  return result;
}

struct AdaptiveDecodeResult {
  ContainerHeader header;
  SideInfo side;
  CodingModel model;
  MaskSet masks;                      // all n masks (derivable from side info)
  std::vector<LatentTensor> layers;   // decoded layers 1..layers_upto
  RealGrid aggregated;                // mean-filled union of the prefix
  int layers_decoded = 0;
};

// Rebuilds the predictor configuration recorded in a container header. For
// conv-gumbel streams the caller supplies the weights, which are checked
// against the CRC the encoder stored.
inline PredictorConfig predictor_from_header(
    const ContainerHeader& h, const ConvPredictorWeights* weights) {
  PredictorConfig cfg;
  cfg.kind = h.predictor_kind;
  cfg.inference = InferenceMode::kArgmax;
  if (h.predictor_kind == PredictorKind::kSigmaTopK) {
    cfg.keep = h.keep_fractions();
  } else {
    if (weights == nullptr) {
      throw InvalidInput("decode: container uses conv predictor; weights required");
    }
    if (crc32(serialize_predictor_weights(*weights)) != h.weights_crc) {
      throw InvalidWeights("decode: supplied weights do not match the stream");
    }
    cfg.weights = std::make_shared<ConvPredictorWeights>(*weights);
  }
  return cfg;
}

inline AdaptiveDecodeResult decode_latent_adaptive(
    const std::vector<uint8_t>& bytes, int layers_upto,
    const ConvPredictorWeights* weights = nullptr,
    const std::optional<RealGrid>& temporal = std::nullopt) {
  AdaptiveDecodeResult result;
  ContainerHeader probe = read_container_header(bytes);
  if (layers_upto < 0) layers_upto = probe.n_layers;
  Container container = read_container(bytes, layers_upto);
  result.header = container.header;
  result.layers_decoded = layers_upto;
  result.side = deserialize_side_info(container.side, container.header.latent);
  result.model = build_coding_model(result.side);

  const PredictorConfig cfg = predictor_from_header(container.header, weights);
  result.masks =
      predict_masks(result.model.field, temporal, cfg, container.header.n_layers);

  std::vector<LayerMask> prefix_masks;
  for (int j = 0; j < layers_upto; ++j) {
    const auto& mask = result.masks.masks[static_cast<std::size_t>(j)];
    result.layers.push_back(
        decode_layer(container.payloads[static_cast<std::size_t>(j)], mask,
                     result.model));
    prefix_masks.push_back(mask);
  }
  result.aggregated = aggregate(result.layers, prefix_masks, result.model.field);
  return result;
}

}  // namespace eac
