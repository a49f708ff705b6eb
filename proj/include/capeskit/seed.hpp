#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace capeskit {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a of a role string.
constexpr std::uint64_t hash_role(std::string_view role) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : role) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash chain h = mix(base ^ fnv(role)); h = mix(h ^ mix(index)) per index.
/// A derived seed depends only on its arguments, never on generation order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view role,
                                    std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = mix64(base ^ hash_role(role));
  for (std::uint64_t i : indices) h = mix64(h ^ mix64(i));
  return h;
}

}  // namespace capeskit
