#pragma once

#include <cstdint>
#include <initializer_list>

#include <ATen/core/Generator.h>

namespace gifguard {

/// SplitMix64 finaliser; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic child seed of `base` for the given stream labels.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> labels) noexcept {
  std::uint64_t s = mix64(base);
  for (auto l : labels) s = mix64(s ^ mix64(l + 0x632BE59BD9B4E019ull));
  return s;
}

/// Fresh CPU generator for torch sampling routines.
at::Generator make_generator(std::uint64_t seed);

}  // namespace gifguard
