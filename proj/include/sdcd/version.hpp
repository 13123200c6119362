#pragma once

namespace sdcd {
inline constexpr const char* kVersion = "0.1.0";
}
