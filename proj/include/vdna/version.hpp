#pragma once

namespace vdna {
inline constexpr const char* kVersion = "0.1.0";
}
