#pragma once

namespace mdfg {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kModelFormatVersion = "MDFGFT01";
inline constexpr const char* kIndexFormatVersion = "MDFGDD01";

}  // namespace mdfg
