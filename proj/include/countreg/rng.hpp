#pragma once

#include <cstdint>
#include <random>

namespace countreg::rng {

// SplitMix64 finalizer, used to hash stream keys into engine seeds.
inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream splitting: every logical draw site owns the key
// (seed, tag, a, b) and gets an independent engine. Per-row and per-replicate
// streams therefore do not depend on evaluation order or thread count.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag = 0,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = mix(seed);
  s = mix(s ^ mix(tag));
  s = mix(s ^ mix(a));
  s = mix(s ^ mix(b));
  return std::mt19937_64(s);
}

// Stream tags (arbitrary distinct constants).
inline constexpr std::uint64_t tag_covariates = 0xC0;
inline constexpr std::uint64_t tag_truth_taxa = 0x71;
inline constexpr std::uint64_t tag_truth_sign = 0x72;
inline constexpr std::uint64_t tag_totals = 0x70;
inline constexpr std::uint64_t tag_counts = 0xCA;
inline constexpr std::uint64_t tag_tuning = 0x7E;

}  // namespace countreg::rng
