#pragma once

#include <stdexcept>
#include <string>

namespace eac {

// Error taxonomy. The CLI maps these onto process exit codes:
// format/corruption -> 3, invariant violations -> 4.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad argument values, shape mismatches, non-finite inputs.
struct InvalidInput : Error {
  using Error::Error;
};

// Weight blob does not match the declared shapes.
struct InvalidWeights : Error {
  using Error::Error;
};

// MaskSet failed disjointness/covering checks.
struct InvalidMaskSet : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct EncodingError : Error {
  using Error::Error;
};

struct DecodingError : Error {
  using Error::Error;
};

struct SerializationError : Error {
  using Error::Error;
};

// Unrecognized magic/version or malformed structure.
struct FormatError : Error {
  using Error::Error;
};

// CRC mismatch.
struct CorruptionError : Error {
  using Error::Error;
};

// Requested layer index beyond what the container holds.
struct RangeError : Error {
  using Error::Error;
};

// Inter frame decoded before its reference exists.
struct DecodeOrderError : Error {
  using Error::Error;
};

}  // namespace eac
