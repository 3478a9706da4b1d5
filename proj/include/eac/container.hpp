#pragma once

#include <cstdint>
#include <vector>

#include "eac/bytes.hpp"
#include "eac/errors.hpp"
#include "eac/partition.hpp"
#include "eac/range_coder.hpp"
#include "eac/tensor.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// "EACB" layered container. Layers are stored in ascending order so that the
// bytes needed for machine task i are exactly a file prefix:
//
//   header | side-info + CRC32 | layer 1 + CRC32 | ... | layer n + CRC32
//
// All multi-byte integers little-endian. The header carries everything the
// decoder needs to re-derive the masks from the decoded side info (predictor
// kind, exact fixed-point keep fractions, a CRC of the conv weights blob), so
// masks themselves never travel.
// ---------------------------------------------------------------------------

enum class ContainerMode : uint8_t {
  kImage = 0,
  kVideoIntra = 1,
  kVideoMotion = 2,
  kVideoResidual = 3,
  kVideoSequence = 4,
};

inline constexpr uint8_t kFlagTemporalAblation = 0x01;
inline constexpr uint8_t kFlagResidualHalved = 0x02;

struct ContainerHeader {
  ContainerMode mode = ContainerMode::kImage;
  uint8_t flags = 0;
  uint8_t pixel_channels = 1;
  Dims latent;                  // C, H, W of the coded latent (zeros for mode 4)
  uint16_t orig_width = 0;      // pixel dims before padding
  uint16_t orig_height = 0;
  uint16_t q16 = 16;            // quality divisor, fixed point 1/16
  uint8_t n_layers = 1;
  PredictorKind predictor_kind = PredictorKind::kSigmaTopK;
  uint32_t weights_crc = 0;     // CRC32 of the predictor weight blob, 0 for topk
  std::vector<uint16_t> keep_q_minus1;   // n_layers-1 entries, units-1 of 1/2^16
  std::vector<uint32_t> payload_lengths; // n_layers entries, bytes without CRC
  uint32_t side_length = 0;              // bytes without CRC

  double q() const { return q16 / 16.0; }

  std::size_t byte_size() const {
    // fixed fields 34 bytes + 2*(n-1) keeps + 4*n lengths
    return 34 + 2 * (static_cast<std::size_t>(n_layers) - 1) +
           4 * static_cast<std::size_t>(n_layers);
  }

  std::vector<KeepFraction> keep_fractions() const {
    std::vector<KeepFraction> keeps;
    keeps.reserve(keep_q_minus1.size());
    for (uint16_t q_m1 : keep_q_minus1) {
      keeps.push_back(KeepFraction{static_cast<uint32_t>(q_m1) + 1});
    }
    return keeps;
  }

  // On-disk bytes of the prefix needed to decode layers 1..i (i may be 0).
  std::size_t prefix_bytes(int layers_upto) const {
    std::size_t total = byte_size() + side_length + 4;
    for (int j = 0; j < layers_upto; ++j) {
      total += payload_lengths[static_cast<std::size_t>(j)] + 4;
    }
    return total;
  }
  std::size_t total_bytes() const { return prefix_bytes(n_layers); }
};

namespace detail {

inline void write_header_fields(ByteWriter& out, const ContainerHeader& h) {
  out.tag("EACB");
  out.u8(1);  // version
  out.u8(static_cast<uint8_t>(h.mode));
  out.u8(h.flags);
  out.u8(h.pixel_channels);
  out.u16(static_cast<uint16_t>(h.latent.channels));
  out.u16(static_cast<uint16_t>(h.latent.height));
  out.u16(static_cast<uint16_t>(h.latent.width));
  out.u16(h.orig_width);
  out.u16(h.orig_height);
  out.u16(h.q16);
  out.u8(h.n_layers);
  out.u8(static_cast<uint8_t>(h.predictor_kind));
  out.u32(h.weights_crc);
  for (uint16_t k : h.keep_q_minus1) out.u16(k);
  for (uint32_t len : h.payload_lengths) out.u32(len);
  out.u32(h.side_length);
}

}  // namespace detail

inline std::vector<uint8_t> write_container(const ContainerHeader& header,
                                            const std::vector<uint8_t>& side,
                                            const std::vector<Payload>& layers) {
  if (header.n_layers < 1 || layers.size() != header.n_layers ||
      header.payload_lengths.size() != header.n_layers ||
      header.keep_q_minus1.size() !=
          static_cast<std::size_t>(header.n_layers) - 1) {
    throw SerializationError("write_container: header/payload count mismatch");
  }
  if (header.side_length != side.size()) {
    throw SerializationError("write_container: side-info length mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (header.payload_lengths[i] != layers[i].bytes.size()) {
      throw SerializationError("write_container: payload length mismatch at layer " +
                               std::to_string(i + 1));
    }
  }
  ByteWriter out;
  detail::write_header_fields(out, header);
  out.u32(crc32(out.bytes()));
  out.raw(side);
  out.u32(crc32(side));
  for (const auto& layer : layers) {
    out.raw(layer.bytes);
    out.u32(crc32(layer.bytes));
  }
  return out.take();
}

struct Container {
  ContainerHeader header;
  std::vector<uint8_t> side;
  std::vector<Payload> payloads;  // layers 1..layers_upto
};

// Parses the header alone; used by inspect and by the video index reader.
inline ContainerHeader read_container_header(const std::vector<uint8_t>& bytes) {
  ByteReader in(bytes);
  in.expect_tag("EACB", "container");
  if (in.u8() != 1) throw FormatError("container: unsupported version");
  ContainerHeader h;
  const uint8_t mode = in.u8();
  if (mode > 4) throw FormatError("container: unknown mode byte");
  h.mode = static_cast<ContainerMode>(mode);
  h.flags = in.u8();
  h.pixel_channels = in.u8();
  h.latent.channels = in.u16();
  h.latent.height = in.u16();
  h.latent.width = in.u16();
  h.orig_width = in.u16();
  h.orig_height = in.u16();
  h.q16 = in.u16();
  h.n_layers = in.u8();
  if (h.n_layers < 1) throw FormatError("container: zero layers");
  const uint8_t kind = in.u8();
  if (kind > 1) throw FormatError("container: unknown predictor kind");
  h.predictor_kind = static_cast<PredictorKind>(kind);
  h.weights_crc = in.u32();
  h.keep_q_minus1.resize(static_cast<std::size_t>(h.n_layers) - 1);
  for (auto& k : h.keep_q_minus1) k = in.u16();
  h.payload_lengths.resize(h.n_layers);
  for (auto& len : h.payload_lengths) len = in.u32();
  h.side_length = in.u32();
  const std::size_t crc_pos = in.pos();
  const uint32_t stored_crc = in.u32();
  if (crc32(bytes.data(), crc_pos) != stored_crc) {
    throw CorruptionError("container: header CRC mismatch");
  }
  return h;
}

// Reads layers 1..layers_upto from a byte prefix of the container. Bytes of
// later layers are never touched, so a file truncated after layer i still
// serves tasks 1..i.
inline Container read_container(const std::vector<uint8_t>& bytes,
                                int layers_upto) {
  Container c;
  c.header = read_container_header(bytes);
  if (layers_upto < 0 || layers_upto > c.header.n_layers) {
    throw RangeError("read_container: layer " + std::to_string(layers_upto) +
                     " of " + std::to_string(c.header.n_layers));
  }
  const std::size_t need = c.header.prefix_bytes(layers_upto);
  if (bytes.size() < need) {
    throw FormatError("container: prefix for layer " +
                      std::to_string(layers_upto) + " needs " +
                      std::to_string(need) + " bytes, have " +
                      std::to_string(bytes.size()));
  }
  ByteReader in(bytes.data(), need);
  in.raw(c.header.byte_size());  // header already parsed and checked
  c.side = in.raw(c.header.side_length);
  if (in.u32() != crc32(c.side)) {
    throw CorruptionError("container: side-info CRC mismatch");
  }
  c.payloads.reserve(static_cast<std::size_t>(layers_upto));
  for (int j = 0; j < layers_upto; ++j) {
    Payload p;
    p.bytes = in.raw(c.header.payload_lengths[static_cast<std::size_t>(j)]);
    if (in.u32() != crc32(p.bytes)) {
      throw CorruptionError("container: layer " + std::to_string(j + 1) +
                            " CRC mismatch");
    }
    c.payloads.push_back(std::move(p));
  }
  return c;
}

}  // namespace eac
