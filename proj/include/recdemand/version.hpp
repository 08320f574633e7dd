#pragma once

namespace recdemand {

inline constexpr const char* kToolName = "recdemand";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace recdemand
