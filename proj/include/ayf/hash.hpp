#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ayf {

// 64-bit FNV-1a; `seed` chains calls over several buffers.
std::uint64_t fnv1a_bytes(const void* data, std::size_t size,
                          std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Lower-case, zero-padded 16-digit hex.
std::string to_hex(std::uint64_t value);

}  // namespace ayf
