#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "eac/errors.hpp"
#include "eac/tensor.hpp"

namespace eac {

inline constexpr double kSigmaMin = 0.11;
inline constexpr double kSigmaMax = 256.0;
inline constexpr int kScaleTableSize = 64;
inline constexpr double kLikelihoodFloor = 0x1.0p-16;

inline constexpr int kSideBlock = 4;       // spatial block, in latent units
inline constexpr double kMuStep = 0.25;    // side-info mean quantization step
inline constexpr int kMuBits = 11;         // signed fixed-point width
inline constexpr int kSigmaIdxBits = 6;
inline constexpr int kSideRecordBits = kMuBits + kSigmaIdxBits;

// 64 log-spaced scales covering [0.11, 256], shared by encoder and decoder.
struct ScaleTable {
  std::array<double, kScaleTableSize> values;

  ScaleTable() {
    const double lo = std::log(kSigmaMin);
    const double hi = std::log(kSigmaMax);
    for (int i = 0; i < kScaleTableSize; ++i) {
      values[i] = std::exp(lo + (hi - lo) * i / (kScaleTableSize - 1));
    }
    values.front() = kSigmaMin;
    values.back() = kSigmaMax;
  }

  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }

  // Nearest entry by absolute difference; ties resolve to the lower index.
  int nearest_index(double sigma) const {
    if (sigma <= values.front()) return 0;
    if (sigma >= values.back()) return kScaleTableSize - 1;
    int best = 0;
    double best_d = std::abs(values[0] - sigma);
    for (int i = 1; i < kScaleTableSize; ++i) {
      const double d = std::abs(values[i] - sigma);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
};

inline const ScaleTable& scale_table() {
  static const ScaleTable table;
  return table;
}

// Per-element (mu, sigma) maps used by the rate model, the mask predictors
// and mean-fill aggregation. Always reconstructed from quantized side info so
// encoder and decoder see bit-identical values.
struct GaussianField {
  Dims dims;
  std::vector<double> mu;
  std::vector<double> sigma;

  GaussianField() = default;
  explicit GaussianField(const Dims& d)
      : dims(d), mu(d.count(), 0.0), sigma(d.count(), kSigmaMin) {}
};

// One record per (channel, 4x4 spatial block): quantized block mean plus an
// index into the scale table. 17 bits on the wire.
struct SideInfo {
  Dims dims;  // dims of the governed latent
  struct Record {
    int16_t mu_q = 0;     // mean in units of 0.25, two's complement 11 bits
    uint8_t sigma_idx = 0;
  };
  std::vector<Record> records;  // channel-major, block row-major

  int blocks_h() const { return (dims.height + kSideBlock - 1) / kSideBlock; }
  int blocks_w() const { return (dims.width + kSideBlock - 1) / kSideBlock; }
  std::size_t record_count() const {
    return static_cast<std::size_t>(dims.channels) * blocks_h() * blocks_w();
  }
};

// Probability that a unit-width bin centered on integer v carries a sample of
// N(mu, sigma^2): Phi((v+.5-mu)/s) - Phi((v-.5-mu)/s), floored at 2^-16 so no
// symbol is ever impossible for the coder.
namespace detail {

inline double normal_interval_mass(double a, double b) {
  // Mass of the standard normal on [a, b]; arranged to avoid cancellation in
  // the tails by mirroring onto the positive half-axis.
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

}  // namespace detail

inline double likelihood(int v, double mu, double sigma) {
  const double a = (v - 0.5 - mu) / sigma;
  const double b = (v + 0.5 - mu) / sigma;
  const double p = detail::normal_interval_mass(a, b);
  return p < kLikelihoodFloor ? kLikelihoodFloor : p;
}

inline SideInfo extract_side_info(const LatentTensor& latent) {
  SideInfo side;
  side.dims = latent.dims;
  side.records.reserve(side.record_count());
  const auto& table = scale_table();
  const int bh = side.blocks_h();
  const int bw = side.blocks_w();
  for (int c = 0; c < latent.dims.channels; ++c) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        const int h0 = by * kSideBlock;
        const int w0 = bx * kSideBlock;
        const int h1 = std::min(h0 + kSideBlock, latent.dims.height);
        const int w1 = std::min(w0 + kSideBlock, latent.dims.width);
        double sum = 0.0, sum_sq = 0.0;
        int count = 0;
        for (int h = h0; h < h1; ++h) {
          for (int w = w0; w < w1; ++w) {
            const double x = latent.at(c, h, w);
            sum += x;
            sum_sq += x * x;
            ++count;
          }
        }
        const double mean = sum / count;
        double sigma = kSigmaMin;
        if (count > 1) {
          const double var = std::max(0.0, sum_sq / count - mean * mean);
          sigma = std::sqrt(var);
        }
        sigma = std::clamp(sigma, kSigmaMin, kSigmaMax);
        SideInfo::Record rec;
        const int mu_units =
            std::clamp(round_half_away(mean / kMuStep), -(1 << (kMuBits - 1)),
                       (1 << (kMuBits - 1)) - 1);
        rec.mu_q = static_cast<int16_t>(mu_units);
        rec.sigma_idx = static_cast<uint8_t>(table.nearest_index(sigma));
        side.records.push_back(rec);
      }
    }
  }
  return side;
}

// Decoder-side reconstruction of the per-element model: every element
// inherits its block's dequantized mean and table sigma.
inline GaussianField expand_side_info(const SideInfo& side, const Dims& dims) {
  if (!(side.dims == dims)) {
    throw InvalidInput("expand_side_info: side covers " + to_string(side.dims) +
                       ", requested " + to_string(dims));
  }
  if (side.records.size() != side.record_count()) {
    throw InvalidInput("expand_side_info: record count mismatch");
  }
  GaussianField field(dims);
  const auto& table = scale_table();
  const int bh = side.blocks_h();
  const int bw = side.blocks_w();
  for (int c = 0; c < dims.channels; ++c) {
    for (int h = 0; h < dims.height; ++h) {
      for (int w = 0; w < dims.width; ++w) {
        const std::size_t rec_idx =
            (static_cast<std::size_t>(c) * bh + h / kSideBlock) * bw +
            w / kSideBlock;
        const auto& rec = side.records[rec_idx];
        const std::size_t i = flatten_index(c, h, w, dims);
        field.mu[i] = rec.mu_q * kMuStep;
        field.sigma[i] = table[rec.sigma_idx];
      }
    }
  }
  return field;
}

// Model estimate in bits for the masked elements; the coder's actual output
// tracks this within a small bounded overhead when models match.
inline double estimate_rate(const LatentTensor& latent,
                            const GaussianField& field, const LayerMask& mask) {
  if (!(latent.dims == field.dims) || !(latent.dims == mask.dims)) {
    throw InvalidInput("estimate_rate: dims disagree");
  }
  constexpr double kInvLog2 = 1.4426950408889634074;  // 1/ln(2)
  double bits = 0.0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    bits -= std::log(likelihood(latent.values[i], field.mu[i], field.sigma[i])) *
            kInvLog2;
  }
  return bits;
}

inline std::size_t side_info_rate(const SideInfo& side) {
  return side.record_count() * kSideRecordBits;
}

namespace detail {

class BitWriter {
 public:
  void put(uint32_t value, int bits) {
    for (int i = bits - 1; i >= 0; --i) {
      acc_ = static_cast<uint8_t>((acc_ << 1) | ((value >> i) & 1));
      if (++fill_ == 8) {
        bytes_.push_back(acc_);
        acc_ = 0;
        fill_ = 0;
      }
    }
  }
  std::vector<uint8_t> finish() {
    if (fill_ > 0) {
      bytes_.push_back(static_cast<uint8_t>(acc_ << (8 - fill_)));
      acc_ = 0;
      fill_ = 0;
    }
    return std::move(bytes_);
  }

 private:
  std::vector<uint8_t> bytes_;
  uint8_t acc_ = 0;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}
  uint32_t get(int bits) {
    uint32_t value = 0;
    for (int i = 0; i < bits; ++i) {
      const std::size_t byte = pos_ >> 3;
      if (byte >= bytes_.size()) throw FormatError("side info: truncated");
      const int shift = 7 - static_cast<int>(pos_ & 7);
      value = (value << 1) | ((bytes_[byte] >> shift) & 1);
      ++pos_;
    }
    return value;
  }

 private:
  const std::vector<uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Wire form: 17-bit records (11-bit mean, 6-bit sigma index) packed MSB-first
// with no padding between records; the final byte is zero-padded.
inline std::vector<uint8_t> serialize_side_info(const SideInfo& side) {
  detail::BitWriter writer;
  for (const auto& rec : side.records) {
    writer.put(static_cast<uint32_t>(rec.mu_q) & ((1u << kMuBits) - 1), kMuBits);
    writer.put(rec.sigma_idx, kSigmaIdxBits);
  }
  return writer.finish();
}

inline SideInfo deserialize_side_info(const std::vector<uint8_t>& bytes,
                                      const Dims& dims) {
  SideInfo side;
  side.dims = dims;
  const std::size_t n = side.record_count();
  if (bytes.size() != (n * kSideRecordBits + 7) / 8) {
    throw FormatError("side info: payload length does not match latent dims");
  }
  detail::BitReader reader(bytes);
  side.records.resize(n);
  for (auto& rec : side.records) {
    uint32_t raw = reader.get(kMuBits);
    // sign-extend the 11-bit two's-complement field
    if (raw & (1u << (kMuBits - 1))) raw |= ~((1u << kMuBits) - 1);
    rec.mu_q = static_cast<int16_t>(static_cast<int32_t>(raw));
    rec.sigma_idx = static_cast<uint8_t>(reader.get(kSigmaIdxBits));
  }
  return side;
}

}  // namespace eac
