#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace wastesite {

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Lower-case hex of the top `digits` nibbles.
inline std::string hex_digest(std::uint64_t h, int digits = 16) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<std::size_t>(digits));
  for (int i = 0; i < digits; ++i) out.push_back(kHex[(h >> (60 - 4 * i)) & 0xF]);
  return out;
}

}  // namespace wastesite
