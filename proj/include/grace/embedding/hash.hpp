#pragma once

#include <cstdint>
#include <span>

namespace grace {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a, 64-bit.
constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                                std::uint64_t h = kFnvOffsetBasis) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

// FNV-1a-64 over the little-endian 8-byte encoding of item_id, mod vocab.
constexpr std::uint64_t hash_item_id(std::uint64_t item_id,
                                     std::uint64_t vocab_size) {
  std::uint8_t le[8] = {};
  for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(item_id >> (8 * i));
  return fnv1a64(le) % vocab_size;
}

}  // namespace grace
