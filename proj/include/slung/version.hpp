#pragma once

namespace slung {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace slung
