#pragma once

namespace eac {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace eac
