#pragma once

// Little-endian primitives and the shared "magic + version + JSON" envelope
// used by every vdna file format.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vdna/error.hpp"

namespace vdna::detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
inline T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
  }
  return value;
}

template <typename T>
inline void put_le(std::string& out, T value) {
  value = byteswap_if_big(value);
  const auto* p = reinterpret_cast<const char*>(&value);
  out.append(p, sizeof(T));
}

template <typename T>
inline void write_le(std::ostream& out, T value) {
  value = byteswap_if_big(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
inline T get_le(const unsigned char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return byteswap_if_big(value);
}

// Reads exactly n bytes or reports how many were available.
inline std::size_t read_some(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

template <typename T>
inline T read_le(std::istream& in, std::string_view what) {
  std::array<unsigned char, sizeof(T)> buf{};
  if (read_some(in, reinterpret_cast<char*>(buf.data()), sizeof(T)) !=
      sizeof(T)) {
    throw FormatError("truncated file while reading " + std::string(what));
  }
  return get_le<T>(buf.data());
}

struct Envelope {
  std::uint32_t version = 0;
  nlohmann::json meta;
};

inline void write_envelope(std::ostream& out, std::string_view magic,
                           std::uint32_t version, const nlohmann::json& meta) {
  const std::string text = meta.dump();
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_le<std::uint32_t>(out, version);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline Envelope read_envelope(std::istream& in, std::string_view magic,
                              std::uint32_t expected_version) {
  std::string seen(magic.size(), '\0');
  if (read_some(in, seen.data(), seen.size()) != seen.size() || seen != magic) {
    throw FormatError("bad magic: expected \"" + std::string(magic) + "\"");
  }
  Envelope env;
  env.version = read_le<std::uint32_t>(in, "version");
  if (env.version != expected_version) {
    throw FormatError("unsupported " + std::string(magic) + " version " +
                      std::to_string(env.version) + " (expected " +
                      std::to_string(expected_version) + ")");
  }
  const auto meta_len = read_le<std::uint32_t>(in, "metadata length");
  std::string text(meta_len, '\0');
  if (read_some(in, text.data(), meta_len) != meta_len) {
    throw FormatError("truncated metadata");
  }
  try {
    env.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metadata is not valid JSON: ") + e.what());
  }
  return env;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void finish_write(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

// FNV-1a, used for stable content fingerprints (not for integrity checks).
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

template <typename T>
T json_get(const nlohmann::json& meta, const char* key) {
  try {
    return meta.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("metadata field '") + key +
                      "' missing or has the wrong type");
  }
}

}  // namespace vdna::detail
