#pragma once

#include <cstdint>

namespace tinyptr {

/// Master seed from which every hash function in a table is derived.
struct HashSeed {
  std::uint64_t value = 0;

  friend constexpr bool operator==(HashSeed, HashSeed) = default;
};

namespace hash {

/// Stafford variant 13 of the splitmix64 finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Maps a uniform 64-bit word onto [0, range) by multiply-shift.
constexpr std::uint64_t reduce(std::uint64_t word, std::uint64_t range) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(word) * range) >> 64);
}

constexpr std::uint64_t keyed(HashSeed seed, std::uint64_t key) noexcept {
  const std::uint64_t s = mix64(seed.value ^ 0x9e3779b97f4a7c15ULL);
  return mix64(mix64(key ^ s) + (s | 1));
}

}  // namespace hash

/// Derives the i-th member of a seed family. Distinct i give distinct seeds.
constexpr HashSeed derive_seed(HashSeed seed, std::uint64_t i) noexcept {
  return HashSeed{seed.value ^ hash::mix64((i + 1) * 0xd1b54a32d192ed03ULL)};
}

constexpr std::uint64_t hash_to_range(HashSeed seed, std::uint64_t key,
                                      std::uint64_t range) noexcept {
  return hash::reduce(hash::keyed(seed, key), range);
}

/// h_i(key) for the family indexed by i; member i is keyed by derive_seed(seed, i).
constexpr std::uint64_t hash_stream(HashSeed seed, std::uint64_t key, std::uint64_t i,
                                    std::uint64_t range) noexcept {
  return hash_to_range(derive_seed(seed, i), key, range);
}

/// Small deterministic generator for workloads and sampling (splitmix64).
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return hash::mix64(state_);
  }

  /// Uniform in [0, range).
  constexpr std::uint64_t below(std::uint64_t range) noexcept {
    return hash::reduce((*this)(), range);
  }

 private:
  std::uint64_t state_;
};

}  // namespace tinyptr
