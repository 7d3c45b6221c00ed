#pragma once

#include <cstdint>
#include <initializer_list>

namespace chw {

/// splitmix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stable 64-bit hash of an ordered list of words.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t base,
                                                  std::initializer_list<std::uint64_t> parts)
{
  std::uint64_t h = mix64(base);
  for (std::uint64_t v : parts) h = mix64(h ^ mix64(v));
  return h;
}

// Stream tags keep cohort draws and noise draws on independent streams.
inline constexpr std::uint64_t kCohortStream = 0xC0407ULL;
inline constexpr std::uint64_t kNoiseStream = 0x5E15EULL;

}  // namespace chw
