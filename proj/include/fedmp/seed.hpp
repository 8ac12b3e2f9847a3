#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace fedmp {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stream seed for one role of an experiment, e.g. derive_seed(seed, "client", {id, round}).
/// Depends only on its arguments, so any round or client can be replayed in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view role,
                                    std::initializer_list<std::uint64_t> indices = {}) noexcept {
  std::uint64_t h = splitmix64(base ^ splitmix64(fnv1a(role)));
  for (auto i : indices) h = splitmix64(h ^ splitmix64(i + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace fedmp
