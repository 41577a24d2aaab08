#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>

#include "tinyptr/bucket_bitmap.hpp"
#include "tinyptr/core.hpp"
#include "tinyptr/hashing.hpp"
#include "tinyptr/lbt.hpp"

namespace tinyptr {

/// Power-of-two-choices allocator over buckets of Θ(log log n) slots. Each key
/// hashes to two buckets and takes the lowest free slot of the emptier one
/// (ties go to the first hash). Pointer: choice bit ∥ slot bits.
class TwoChoiceTable {
 public:
  /// max(4, 2 * ceil(log2 log2 max(n, 4))).
  static std::uint64_t bucket_size_for(std::uint64_t n) {
    const double lg = std::log2(static_cast<double>(std::max<std::uint64_t>(n, 4)));
    const auto b = static_cast<std::uint64_t>(std::ceil(std::log2(lg) - 1e-12));
    return std::max<std::uint64_t>(4, 2 * b);
  }

  TwoChoiceTable(std::uint64_t n, HashSeed seed)
      : n_(n),
        b_(bucket_size_for(n)),
        num_buckets_((n + b_ - 1) / b_),
        width_(1 + index_bits(b_)),
        seed_(seed),
        occupancy_(std::max<std::uint64_t>(num_buckets_, 1), b_) {
    if (n_ == 0) {
      for (std::uint64_t i = 0; i < b_; ++i) occupancy_.set(0, i);
      return;
    }
    for (std::uint64_t slot = n_; slot < num_buckets_ * b_; ++slot)
      occupancy_.set(num_buckets_ - 1, slot - (num_buckets_ - 1) * b_);
  }

  std::optional<TinyPointer> allocate(std::uint64_t key) {
    if (n_ == 0) {
      stats_.record_failure();
      return std::nullopt;
    }
    const std::uint64_t first = choice(key, 0);
    const std::uint64_t second = choice(key, 1);
    const std::uint64_t load_first = occupancy_.count_ones(first);
    const std::uint64_t load_second = occupancy_.count_ones(second);
    const bool use_second = load_second < load_first;
    const std::uint64_t bucket = use_second ? second : first;
    const auto free_slot = occupancy_.first_zero(bucket);
    if (!free_slot) {
      stats_.record_failure();
      return std::nullopt;
    }
    occupancy_.set(bucket, *free_slot);
    const TinyPointer p =
        TinyPointer(use_second ? 1 : 0, 1).append_bits(*free_slot, width_ - 1);
    stats_.record_success(p);
    return p;
  }

  SlotIndex dereference(std::uint64_t key, TinyPointer p) const noexcept {
    if (n_ == 0) return SlotIndex{0};
    const std::uint64_t bucket = choice(key, p.read(0, 1));
    const std::uint64_t offset = std::min(p.read(1, width_ - 1), b_ - 1);
    return SlotIndex{std::min(bucket * b_ + offset, n_ - 1)};
  }

  void free(std::uint64_t key, TinyPointer p) {
    const std::uint64_t slot = dereference(key, p).value;
    occupancy_.reset(slot / b_, slot % b_);
    stats_.record_free();
  }

  std::uint64_t choice(std::uint64_t key, std::uint64_t which) const noexcept {
    return hash_stream(seed_, key, which, num_buckets_);
  }

  std::uint64_t free_slots(std::uint64_t bucket) const noexcept {
    return b_ - occupancy_.count_ones(bucket);
  }

  bool occupied(SlotIndex s) const noexcept {
    return n_ != 0 && occupancy_.test(s.value / b_, s.value % b_);
  }

  std::uint64_t slot_count() const noexcept { return n_; }
  std::uint64_t bucket_size() const noexcept { return b_; }
  std::uint64_t num_buckets() const noexcept { return num_buckets_; }
  unsigned pointer_bits() const noexcept { return width_; }
  const TableStats& stats() const noexcept { return stats_; }
  std::uint64_t metadata_bits() const noexcept { return occupancy_.storage_bits(); }
  const BucketBitmap& occupancy() const noexcept { return occupancy_; }

 private:
  std::uint64_t n_;
  std::uint64_t b_;
  std::uint64_t num_buckets_;
  unsigned width_;
  HashSeed seed_;
  BucketBitmap occupancy_;
  TableStats stats_;
};

/// Fixed-size tiny pointers at load factor 1 - delta.
///
/// A load-balancing table over the first ceil((1 - delta/2) n) slots takes
/// almost every allocation; the few that fail go to a two-choice table over
/// the remaining slots. Every pointer is selector ∥ sub-pointer, zero-padded
/// to `pointer_bits()`.
class FixedTable {
 public:
  static constexpr std::uint64_t kMinSlots = 16;
  /// The primary table runs at load factor 1 - delta^2 / kPrimarySlackDivisor.
  static constexpr double kPrimarySlackDivisor = 1.0;

  static std::uint64_t primary_slots_for(std::uint64_t n, double delta) {
    const auto m1 = static_cast<std::uint64_t>(
        std::ceil((1.0 - delta / 2.0) * static_cast<double>(n) - 1e-9));
    return std::min(m1, n);
  }

  FixedTable(std::uint64_t n, double delta, HashSeed seed)
      : n_(checked_slots(n, delta)),
        delta_(delta),
        m1_(primary_slots_for(n, delta)),
        primary_(m1_, delta * delta / kPrimarySlackDivisor, derive_seed(seed, 0)),
        secondary_(n - m1_, derive_seed(seed, 1)),
        width_(1 + std::max(primary_.pointer_bits(), secondary_.pointer_bits())) {}

  std::optional<TinyPointer> allocate(std::uint64_t key) {
    if (auto p = primary_.allocate(key)) return finish(TinyPointer(0, 1).append(*p));
    if (auto p = secondary_.allocate(key)) {
      ++secondary_live_;
      return finish(TinyPointer(1, 1).append(*p));
    }
    stats_.record_failure();
    return std::nullopt;
  }

  SlotIndex dereference(std::uint64_t key, TinyPointer p) const noexcept {
    if (p.read(0, 1) == 0 || secondary_.slot_count() == 0) {
      const TinyPointer sub(p.read(1, primary_.pointer_bits()), primary_.pointer_bits());
      return primary_.dereference(key, sub);
    }
    const TinyPointer sub(p.read(1, secondary_.pointer_bits()), secondary_.pointer_bits());
    return SlotIndex{m1_ + secondary_.dereference(key, sub).value};
  }

  void free(std::uint64_t key, TinyPointer p) {
    if (p.read(0, 1) == 0 || secondary_.slot_count() == 0) {
      primary_.free(key, TinyPointer(p.read(1, primary_.pointer_bits()), primary_.pointer_bits()));
    } else {
      secondary_.free(key,
                      TinyPointer(p.read(1, secondary_.pointer_bits()), secondary_.pointer_bits()));
      --secondary_live_;
    }
    stats_.record_free();
  }

  bool occupied(SlotIndex s) const noexcept {
    return s.value < m1_ ? primary_.occupied(s) : secondary_.occupied(SlotIndex{s.value - m1_});
  }

  std::uint64_t slot_count() const noexcept { return n_; }
  double delta() const noexcept { return delta_; }
  unsigned pointer_bits() const noexcept { return width_; }
  std::uint64_t primary_slots() const noexcept { return m1_; }
  std::uint64_t secondary_live() const noexcept { return secondary_live_; }
  const LoadBalancingTable& primary() const noexcept { return primary_; }
  const TwoChoiceTable& secondary() const noexcept { return secondary_; }
  const TableStats& stats() const noexcept { return stats_; }
  std::uint64_t metadata_bits() const noexcept {
    return primary_.metadata_bits() + secondary_.metadata_bits() + 64;
  }

 private:
  static std::uint64_t checked_slots(std::uint64_t n, double delta) {
    require_delta(delta);
    if (n < kMinSlots) throw InvalidParams("fixed table needs at least 16 slots");
    return n;
  }

  TinyPointer finish(TinyPointer p) {
    const TinyPointer out = p.padded_to(width_);
    stats_.record_success(out);
    return out;
  }

  std::uint64_t n_;
  double delta_;
  std::uint64_t m1_;
  LoadBalancingTable primary_;
  TwoChoiceTable secondary_;
  unsigned width_;
  std::uint64_t secondary_live_ = 0;
  TableStats stats_;
};

static_assert(DereferenceTable<TwoChoiceTable>);
static_assert(DereferenceTable<FixedTable>);

}  // namespace tinyptr
