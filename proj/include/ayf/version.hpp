#pragma once

namespace ayf {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace ayf
