#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>

#include "vdna/error.hpp"

namespace vdna::detail {

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for payloads above 4 GiB.
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string deflate_bytes(std::string_view raw, int level = 6) {
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::string out(bound, '\0');
  const int rc = ::compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                             reinterpret_cast<const Bytef*>(raw.data()),
                             static_cast<uLong>(raw.size()), level);
  if (rc != Z_OK) throw FormatError("deflate failed (zlib code " + std::to_string(rc) + ")");
  out.resize(bound);
  return out;
}

inline std::string inflate_bytes(std::string_view packed, std::size_t raw_size) {
  std::string out(raw_size, '\0');
  uLongf dest_len = static_cast<uLongf>(raw_size);
  const int rc = ::uncompress(reinterpret_cast<Bytef*>(out.data()), &dest_len,
                              reinterpret_cast<const Bytef*>(packed.data()),
                              static_cast<uLong>(packed.size()));
  if (rc != Z_OK || dest_len != raw_size) {
    throw FormatError("corrupt compressed payload (zlib code " + std::to_string(rc) + ")");
  }
  return out;
}

}  // namespace vdna::detail
