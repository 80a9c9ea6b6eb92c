#pragma once

namespace kinerec {

inline constexpr const char* kToolName = "kinerec";
inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace kinerec
