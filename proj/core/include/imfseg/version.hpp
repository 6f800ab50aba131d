#pragma once

namespace imfseg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace imfseg
