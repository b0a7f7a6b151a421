#pragma once

namespace nsg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nsg
