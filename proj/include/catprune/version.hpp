#pragma once

namespace catprune {

inline constexpr const char* kToolName = "catprune";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace catprune
