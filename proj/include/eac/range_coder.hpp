#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "eac/errors.hpp"
#include "eac/gaussian.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// Carry-less range coder, 64-bit state, 16-bit frequency precision, byte-wise
// renormalization.
//
// Encoder state is the half-open interval [low, low + range) over the 64-bit
// ring. A top byte is emitted as soon as low and low + range agree on it; the
// byte is then final, so no carry can ever propagate into emitted output.
// When the top bytes disagree while range has shrunk below 2^48 (underflow),
// the interval is truncated at the next multiple of 2^48 — this makes the top
// byte final at a bounded coding-efficiency cost and is what keeps the coder
// carry-free. The decoder mirrors low/range exactly, so both sides renormalize
// on the same schedule and the bitstream is reproducible bit for bit.
//
// Flush picks the smallest multiple of 2^48 inside the final interval and
// emits its top two bytes; the decoder zero-pads reads past the end of the
// payload, which reconstructs that value exactly. Flush cost: 2 bytes.
// ---------------------------------------------------------------------------

inline constexpr uint32_t kFreqTotalBits = 16;
inline constexpr uint32_t kFreqTotal = 1u << kFreqTotalBits;  // 65536
inline constexpr uint64_t kRcTop = 1ull << 56;
inline constexpr uint64_t kRcBottom = 1ull << 48;

// Symbol alphabet: centered residuals in [-127, 127] map to slots 0..254;
// slot 255 is the escape for residuals outside that range, which are followed
// by a fixed 9-bit raw value covering [-255, 255].
inline constexpr int kAlphabetSize = kValueMax - kValueMin + 1;  // 255
inline constexpr int kEscapeSlot = kAlphabetSize;                // 255
inline constexpr int kCdfSlots = kAlphabetSize + 1;              // 256
inline constexpr int kEscapeRawBits = 9;
inline constexpr int kEscapeRawBias = 255;

// Cumulative frequencies over the residual alphabet plus the escape slot.
// cum[k+1] - cum[k] >= 1 for every slot and cum[kCdfSlots] == 2^16.
struct CdfTable {
  std::array<uint32_t, kCdfSlots + 1> cum;

  uint32_t freq(int slot) const { return cum[slot + 1] - cum[slot]; }

  int find(uint32_t value) const {
    // largest slot with cum[slot] <= value
    const auto it = std::upper_bound(cum.begin(), cum.end(), value);
    return static_cast<int>(it - cum.begin()) - 1;
  }
};

// Builds the static table for one scale-table bin. Frequencies follow the
// box-integrated Gaussian at mu = 0 with the 2^-16 probability floor; the
// escape slot carries the two-sided tail mass beyond +-127.5. Renormalization
// to a 2^16 total uses largest-remainder apportionment with every slot held
// at frequency >= 1.
inline CdfTable build_cdf(int sigma_idx) {
  if (sigma_idx < 0 || sigma_idx >= kScaleTableSize) {
    throw InvalidInput("build_cdf: sigma index out of range");
  }
  const double sigma = scale_table()[sigma_idx];

  std::array<double, kCdfSlots> prob;
  for (int r = kValueMin; r <= kValueMax; ++r) {
    prob[static_cast<std::size_t>(r - kValueMin)] = likelihood(r, 0.0, sigma);
  }
  const double tail = detail::normal_interval_mass((kValueMax + 0.5) / sigma,
                                                   1e30) * 2.0;
  prob[kEscapeSlot] = std::max(tail, kLikelihoodFloor);

  const double total = std::accumulate(prob.begin(), prob.end(), 0.0);

  std::array<uint32_t, kCdfSlots> freq;
  std::array<std::pair<double, int>, kCdfSlots> remainder;
  uint64_t assigned = 0;
  for (int s = 0; s < kCdfSlots; ++s) {
    const double scaled = prob[static_cast<std::size_t>(s)] / total * kFreqTotal;
    const double fl = std::floor(scaled);
    freq[static_cast<std::size_t>(s)] = static_cast<uint32_t>(fl);
    assigned += static_cast<uint64_t>(fl);
    remainder[static_cast<std::size_t>(s)] = {scaled - fl, s};
  }
  // Hand out the leftover units to the largest remainders; break ties toward
  // the lower slot so the table is identical everywhere.
  std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < kFreqTotal; ++i) {
    freq[static_cast<std::size_t>(remainder[i].second)] += 1;
    ++assigned;
  }
  // Enforce the >= 1 floor, paying from the currently largest slot.
  for (int s = 0; s < kCdfSlots; ++s) {
    while (freq[static_cast<std::size_t>(s)] == 0) {
      const auto max_it = std::max_element(freq.begin(), freq.end());
      *max_it -= 1;
      freq[static_cast<std::size_t>(s)] += 1;
    }
  }

  CdfTable table;
  table.cum[0] = 0;
  for (int s = 0; s < kCdfSlots; ++s) {
    table.cum[static_cast<std::size_t>(s) + 1] =
        table.cum[static_cast<std::size_t>(s)] + freq[static_cast<std::size_t>(s)];
  }
  return table;
}

// Process-wide cache: tables depend only on the sigma bin.
inline const CdfTable& cdf_for_sigma(int sigma_idx) {
  static const std::array<CdfTable, kScaleTableSize> tables = [] {
    std::array<CdfTable, kScaleTableSize> all;
    for (int i = 0; i < kScaleTableSize; ++i) all[static_cast<std::size_t>(i)] = build_cdf(i);
    return all;
  }();
  if (sigma_idx < 0 || sigma_idx >= kScaleTableSize) {
    throw InvalidInput("cdf_for_sigma: sigma index out of range");
  }
  return tables[static_cast<std::size_t>(sigma_idx)];
}

// Raw coded bytes of one layer.
struct Payload {
  std::vector<uint8_t> bytes;
  std::size_t bit_length() const { return bytes.size() * 8; }
};

class RangeEncoder {
 public:
  void encode(uint32_t cum, uint32_t freq) {
    const uint64_t r = range_ / kFreqTotal;
    low_ += cum * r;
    range_ = r * freq;
    renorm();
  }

  void encode_slot(const CdfTable& table, int slot) {
    encode(table.cum[static_cast<std::size_t>(slot)],
           table.freq(slot));
  }

  // Uniform bits, MSB first (used for escape raw values).
  void encode_raw(uint32_t value, int bits) {
    for (int i = bits - 1; i >= 0; --i) {
      const uint32_t bit = (value >> i) & 1;
      const uint64_t r = range_ >> 1;
      low_ += bit * r;
      range_ = r;
      renorm();
    }
  }

  Payload finish() {
    // Smallest multiple of 2^48 in [low, low + range); range >= 2^48 after
    // renormalization guarantees one exists. Its lower 48 bits are zero,
    // matching the decoder's zero padding, so two bytes identify it.
    const uint64_t poin = low_ + ((0 - low_) & (kRcBottom - 1));
    out_.push_back(static_cast<uint8_t>(poin >> 56));
    out_.push_back(static_cast<uint8_t>(poin >> 48));
    Payload payload;
    payload.bytes = std::move(out_);
    return payload;
  }

 private:
  void renorm() {
    while ((low_ ^ (low_ + range_)) < kRcTop ||
           (range_ < kRcBottom && ((range_ = (0 - low_) & (kRcBottom - 1)), true))) {
      out_.push_back(static_cast<uint8_t>(low_ >> 56));
      low_ <<= 8;
      range_ <<= 8;
    }
  }

  uint64_t low_ = 0;
  uint64_t range_ = ~0ull;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(const Payload& payload) : bytes_(payload.bytes) {
    for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
  }

  uint32_t decode_target() const {
    const uint64_t r = range_ / kFreqTotal;
    const uint64_t target = (code_ - low_) / r;
    return static_cast<uint32_t>(std::min<uint64_t>(target, kFreqTotal - 1));
  }

  void consume(uint32_t cum, uint32_t freq) {
    const uint64_t r = range_ / kFreqTotal;
    low_ += cum * r;
    range_ = r * freq;
    renorm();
  }

  int decode_slot(const CdfTable& table) {
    const int slot = table.find(decode_target());
    consume(table.cum[static_cast<std::size_t>(slot)], table.freq(slot));
    return slot;
  }

  uint32_t decode_raw(int bits) {
    uint32_t value = 0;
    for (int i = 0; i < bits; ++i) {
      const uint64_t r = range_ >> 1;
      const uint32_t bit = (code_ - low_) >= r ? 1u : 0u;
      low_ += bit * r;
      range_ = r;
      renorm();
      value = (value << 1) | bit;
    }
    return value;
  }

 private:
  uint8_t next_byte() {
    if (pos_ < bytes_.size()) return bytes_[pos_++];
    // The flush convention leaves the decoder exactly six bytes short of the
    // encoder's read schedule; anything beyond that means truncation.
    if (++past_end_ > 6) throw DecodingError("range decoder: truncated payload");
    return 0;
  }

  void renorm() {
    while ((low_ ^ (low_ + range_)) < kRcTop ||
           (range_ < kRcBottom && ((range_ = (0 - low_) & (kRcBottom - 1)), true))) {
      code_ = (code_ << 8) | next_byte();
      low_ <<= 8;
      range_ <<= 8;
    }
  }

  const std::vector<uint8_t>& bytes_;
  std::size_t pos_ = 0;
  int past_end_ = 0;
  uint64_t low_ = 0;
  uint64_t range_ = ~0ull;
  uint64_t code_ = 0;
};

// Encodes centered residuals; tables[i] is the table for symbol i (one table
// per sigma bin, shared across elements of that bin).
inline Payload encode_symbols(const std::vector<int>& symbols,
                              const std::vector<const CdfTable*>& tables) {
  if (symbols.size() != tables.size()) {
    throw EncodingError("encode: symbol/table count mismatch");
  }
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const int r = symbols[i];
    const CdfTable& table = *tables[i];
    if (r >= kValueMin && r <= kValueMax) {
      enc.encode_slot(table, r - kValueMin);
    } else if (r >= -kEscapeRawBias && r <= kEscapeRawBias) {
      enc.encode_slot(table, kEscapeSlot);
      enc.encode_raw(static_cast<uint32_t>(r + kEscapeRawBias), kEscapeRawBits);
    } else {
      throw EncodingError("encode: residual " + std::to_string(r) +
                          " outside escape range");
    }
  }
  return enc.finish();
}

inline std::vector<int> decode_symbols(const Payload& payload, std::size_t count,
                                       const std::vector<const CdfTable*>& tables) {
  if (tables.size() != count) {
    throw DecodingError("decode: symbol/table count mismatch");
  }
  std::vector<int> symbols;
  symbols.reserve(count);
  if (count == 0) return symbols;
  RangeDecoder dec(payload);
  for (std::size_t i = 0; i < count; ++i) {
    const int slot = dec.decode_slot(*tables[i]);
    if (slot == kEscapeSlot) {
      const uint32_t raw = dec.decode_raw(kEscapeRawBits);
      symbols.push_back(static_cast<int>(raw) - kEscapeRawBias);
    } else {
      symbols.push_back(slot + kValueMin);
    }
  }
  return symbols;
}

}  // namespace eac
