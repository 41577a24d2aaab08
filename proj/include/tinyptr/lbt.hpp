#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>

#include "tinyptr/bucket_bitmap.hpp"
#include "tinyptr/core.hpp"
#include "tinyptr/hashing.hpp"

namespace tinyptr {

/// Width in bits of a fixed-width index into [0, count).
constexpr unsigned index_bits(std::uint64_t count) noexcept {
  return count <= 1 ? 0U : static_cast<unsigned>(std::bit_width(count - 1));
}

/// Single-hash bucketed allocator. A key may only use the bucket it hashes
/// to, so allocations fail when that bucket is full; with load factor 1 - delta
/// only about a delta fraction of allocations fail.
///
/// Pointers are the slot-in-bucket index written in exactly index_bits(b) bits.
class LoadBalancingTable {
 public:
  static constexpr std::uint64_t kMinBucketSize = 8;

  /// b = clamp(ceil(4 * delta^-2 * max(1, log2(1/delta))), 8, m).
  static std::uint64_t bucket_size_for(std::uint64_t m, double delta) {
    require_delta(delta);
    if (m < kMinBucketSize) throw InvalidParams("load-balancing table needs at least 8 slots");
    const double inv = 1.0 / delta;
    const double raw = 4.0 * inv * inv * std::max(1.0, std::log2(inv));
    const double capped = std::min(raw * (1.0 - 1e-12), static_cast<double>(m));
    const auto b = static_cast<std::uint64_t>(std::ceil(capped));
    return std::clamp<std::uint64_t>(b, kMinBucketSize, m);
  }

  LoadBalancingTable(std::uint64_t m, double delta, HashSeed seed)
      : m_(m),
        b_(bucket_size_for(m, delta)),
        num_buckets_((m + b_ - 1) / b_),
        width_(index_bits(b_)),
        seed_(seed),
        occupancy_(num_buckets_, b_) {
    // Phantom slots past m in a short last bucket stay occupied forever.
    for (std::uint64_t slot = m_; slot < num_buckets_ * b_; ++slot)
      occupancy_.set(num_buckets_ - 1, slot - (num_buckets_ - 1) * b_);
  }

  std::optional<TinyPointer> allocate(std::uint64_t key) {
    const std::uint64_t bucket = bucket_of(key);
    const auto free_slot = occupancy_.first_zero(bucket);
    if (!free_slot) {
      stats_.record_failure();
      return std::nullopt;
    }
    occupancy_.set(bucket, *free_slot);
    const TinyPointer p(*free_slot, width_);
    stats_.record_success(p);
    return p;
  }

  SlotIndex dereference(std::uint64_t key, TinyPointer p) const noexcept {
    return SlotIndex{slot_for(bucket_of(key), p.bits())};
  }

  void free(std::uint64_t key, TinyPointer p) {
    const std::uint64_t slot = dereference(key, p).value;
    occupancy_.reset(slot / b_, slot % b_);
    stats_.record_free();
  }

  std::uint64_t bucket_of(std::uint64_t key) const noexcept {
    return hash_to_range(seed_, key, num_buckets_);
  }

  bool occupied(SlotIndex s) const noexcept { return occupancy_.test(s.value / b_, s.value % b_); }

  /// Occupied real slots, by full scan.
  std::uint64_t occupied_count() const noexcept {
    std::uint64_t total = 0;
    for (std::uint64_t b = 0; b < num_buckets_; ++b) total += occupancy_.count_ones(b);
    return total - (num_buckets_ * b_ - m_);
  }

  std::uint64_t slot_count() const noexcept { return m_; }
  std::uint64_t bucket_size() const noexcept { return b_; }
  std::uint64_t num_buckets() const noexcept { return num_buckets_; }
  unsigned pointer_bits() const noexcept { return width_; }
  HashSeed seed() const noexcept { return seed_; }
  const TableStats& stats() const noexcept { return stats_; }
  std::uint64_t metadata_bits() const noexcept { return occupancy_.storage_bits(); }
  const BucketBitmap& occupancy() const noexcept { return occupancy_; }

 private:
  std::uint64_t slot_for(std::uint64_t bucket, std::uint64_t offset) const noexcept {
    const std::uint64_t slot = bucket * b_ + std::min(offset, m_);
    return std::min(slot, m_ - 1);
  }

  std::uint64_t m_;
  std::uint64_t b_;
  std::uint64_t num_buckets_;
  unsigned width_;
  HashSeed seed_;
  BucketBitmap occupancy_;
  TableStats stats_;
};

static_assert(DereferenceTable<LoadBalancingTable>);

}  // namespace tinyptr
