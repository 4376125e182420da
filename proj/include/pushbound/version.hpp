#pragma once

namespace pushbound {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pushbound
