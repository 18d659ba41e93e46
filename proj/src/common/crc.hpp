#pragma once

#include <cstdint>

#include <zlib.h>

#include "common/serde.hpp"

namespace pagestore {

inline std::uint32_t crc32_of(byte_span s) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

// CRC-16/CCITT-FALSE, used by the 8-byte compressed-page header.
inline std::uint16_t crc16_of(byte_span s) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : s) {
    crc ^= static_cast<std::uint16_t>(b) << 8;
    for (int i = 0; i < 8; i++)
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
  }
  return crc;
}

}  // namespace pagestore
