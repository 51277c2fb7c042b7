#pragma once

namespace ki67 {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace ki67
