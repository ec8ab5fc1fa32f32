#pragma once

namespace robermix {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace robermix
