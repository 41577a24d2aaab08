#pragma once

#include <bit>
#include <cassert>
#include <cstdint>
#include <optional>
#include <vector>

namespace tinyptr {

/// Occupancy bits for equally sized buckets, one set bit per occupied slot.
///
/// Each bucket is a small bit tree: level 0 holds the slot bits, and bit j of
/// level k+1 is set when chunk j (64 bits) of level k is full. Buckets are
/// packed back to back in every level, so storage is about one bit per slot
/// whatever the bucket size. Reads past a bucket's end see ones, so
/// `first_zero` is a descent of one chunk per level and never sees a phantom.
class BucketBitmap {
 public:
  BucketBitmap() = default;

  BucketBitmap(std::uint64_t buckets, std::uint64_t bits_per_bucket)
      : buckets_(buckets), bucket_bits_(bits_per_bucket) {
    assert(bits_per_bucket >= 1);
    std::uint64_t units = bits_per_bucket;
    do {
      Level level;
      level.units = units;
      // One guard word so an unaligned 64-bit read never leaves the array.
      level.words.assign((buckets * units + 63) / 64 + 1, 0);
      levels_.push_back(std::move(level));
      units = (units + 63) / 64;
    } while (levels_.back().units > 64);
  }

  std::uint64_t buckets() const noexcept { return buckets_; }
  std::uint64_t bits_per_bucket() const noexcept { return bucket_bits_; }

  bool test(std::uint64_t bucket, std::uint64_t i) const noexcept {
    const std::uint64_t pos = bucket * bucket_bits_ + i;
    return (levels_[0].words[pos / 64] >> (pos % 64)) & 1U;
  }

  void set(std::uint64_t bucket, std::uint64_t i) noexcept {
    std::uint64_t pos = i;
    for (auto& level : levels_) {
      const std::uint64_t at = bucket * level.units + pos;
      level.words[at / 64] |= std::uint64_t{1} << (at % 64);
      if (chunk(level, bucket, pos / 64) != ~std::uint64_t{0}) return;
      pos /= 64;
    }
  }

  void reset(std::uint64_t bucket, std::uint64_t i) noexcept {
    std::uint64_t pos = i;
    for (auto& level : levels_) {
      const bool was_full = chunk(level, bucket, pos / 64) == ~std::uint64_t{0};
      const std::uint64_t at = bucket * level.units + pos;
      level.words[at / 64] &= ~(std::uint64_t{1} << (at % 64));
      if (!was_full) return;
      pos /= 64;
    }
  }

  /// Lowest clear bit of the bucket, if any.
  std::optional<std::uint64_t> first_zero(std::uint64_t bucket) const noexcept {
    std::uint64_t chunk_index = 0;
    for (std::size_t k = levels_.size(); k-- > 0;) {
      const std::uint64_t w = chunk(levels_[k], bucket, chunk_index);
      if (w == ~std::uint64_t{0}) {
        assert(k + 1 == levels_.size());
        return std::nullopt;
      }
      chunk_index = chunk_index * 64 + static_cast<std::uint64_t>(std::countr_one(w));
    }
    return chunk_index;
  }

  /// Set bits among the bucket's real slots.
  std::uint64_t count_ones(std::uint64_t bucket) const noexcept {
    const Level& l0 = levels_[0];
    const std::uint64_t chunks = (bucket_bits_ + 63) / 64;
    std::uint64_t total = 0;
    for (std::uint64_t c = 0; c < chunks; ++c) total += static_cast<std::uint64_t>(std::popcount(chunk(l0, bucket, c)));
    return total - (chunks * 64 - bucket_bits_);
  }

  std::uint64_t storage_bits() const noexcept {
    std::uint64_t bits = 0;
    for (const auto& level : levels_) bits += level.words.size() * 64;
    return bits;
  }

  friend bool operator==(const BucketBitmap& a, const BucketBitmap& b) {
    if (a.buckets_ != b.buckets_ || a.bucket_bits_ != b.bucket_bits_) return false;
    for (std::size_t k = 0; k < a.levels_.size(); ++k)
      if (a.levels_[k].words != b.levels_[k].words) return false;
    return true;
  }

 private:
  struct Level {
    std::uint64_t units = 0;  // bits per bucket
    std::vector<std::uint64_t> words;
  };

  // 64 bits of `level` for `bucket` starting at bit 64 c, ones past the bucket.
  static std::uint64_t chunk(const Level& level, std::uint64_t bucket, std::uint64_t c) noexcept {
    const std::uint64_t start = bucket * level.units + 64 * c;
    const std::uint64_t word = start / 64;
    const unsigned shift = start % 64;
    std::uint64_t v = level.words[word] >> shift;
    if (shift != 0) v |= level.words[word + 1] << (64 - shift);
    const std::uint64_t valid = level.units - 64 * c;
    if (valid < 64) v |= ~std::uint64_t{0} << valid;
    return v;
  }

  std::uint64_t buckets_ = 0;
  std::uint64_t bucket_bits_ = 0;
  std::vector<Level> levels_;
};

}  // namespace tinyptr
