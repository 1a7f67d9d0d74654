#pragma once
// CRC-32 (IEEE 802.3): reflected polynomial 0xEDB88320, init and final xor
// 0xFFFFFFFF. check("123456789") == 0xCBF43926.

#include <array>
#include <cstddef>
#include <cstdint>

namespace accordion {

namespace detail {
inline const std::array<std::uint32_t, 256>& crc32_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}
}  // namespace detail

// Incremental form: feed `crc32_update(prev, ...)` the running value, or use
// `crc32()` for one-shot buffers.
inline std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t len) {
  const auto& table = detail::crc32_table();
  const unsigned char* p = static_cast<const unsigned char*>(data);
  crc = ~crc;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
  return ~crc;
}

inline std::uint32_t crc32(const void* data, std::size_t len) {
  return crc32_update(0, data, len);
}

}  // namespace accordion
