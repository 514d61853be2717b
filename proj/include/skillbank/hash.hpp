#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace skillbank {

// Hex-encoded SHA-256 digest, 64 lowercase chars.
std::string sha256_hex(std::string_view data);

// 64-bit FNV-1a. Used for feature hashing; must stay bit-stable.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace skillbank
