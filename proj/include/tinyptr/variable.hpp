#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "tinyptr/bitcodec.hpp"
#include "tinyptr/check.hpp"
#include "tinyptr/core.hpp"
#include "tinyptr/fixed.hpp"
#include "tinyptr/hashing.hpp"
#include "tinyptr/lbt.hpp"

namespace tinyptr {

/// Slots per bucket in every container level.
inline constexpr std::uint64_t kLevelBucketSize = 8;
inline constexpr unsigned kLevelSlotBits = 3;

/// Geometry shared by all containers of a table: s slots of capacity and
/// log2(s) levels; level i has s_i = s / 2^i buckets and an overflow array of
/// s_i slots. Within a container, level i's bucket slots come first, then its
/// overflow slots, levels in increasing order.
struct ContainerShape {
  std::uint64_t capacity = 0;  // s
  unsigned levels = 0;         // log2 s
  std::vector<std::uint64_t> level_slot_offset;
  std::vector<std::uint64_t> level_bucket_offset;  // also the overflow bit offset
  std::uint64_t slots = 0;
  std::uint64_t buckets = 0;

  static ContainerShape for_capacity(std::uint64_t s) {
    if (s < 4 || !std::has_single_bit(s)) throw InvalidParams("container capacity must be 2^k >= 4");
    ContainerShape shape;
    shape.capacity = s;
    shape.levels = static_cast<unsigned>(std::countr_zero(s));
    std::uint64_t slot = 0;
    std::uint64_t bucket = 0;
    for (unsigned i = 0; i < shape.levels; ++i) {
      shape.level_slot_offset.push_back(slot);
      shape.level_bucket_offset.push_back(bucket);
      slot += (s >> i) * (kLevelBucketSize + 1);
      bucket += s >> i;
    }
    shape.slots = slot;
    shape.buckets = bucket;
    return shape;
  }

  std::uint64_t level_size(unsigned i) const noexcept { return capacity >> i; }

  std::uint64_t overflow_slot_offset(unsigned i) const noexcept {
    return level_slot_offset[i] + level_size(i) * kLevelBucketSize;
  }
};

/// Decoded form of a variable-size tiny pointer.
struct VarPointer {
  enum class Kind : std::uint8_t { LevelBucket, Overflow };

  Kind kind = Kind::LevelBucket;
  unsigned level = 0;  // i, the level index, for both kinds
  std::uint64_t slot = 0;

  friend constexpr bool operator==(const VarPointer&, const VarPointer&) = default;
};

/// LevelBucket(i, j): 0 ∥ gamma(i + 1) ∥ 3 bits of j.
/// Overflow at level i: 1 ∥ gamma(back + 1) ∥ (back + 1) bits of j, with
/// back = levels - 1 - i, so that the slot width log2(s_i) follows from back.
inline TinyPointer encode_var_pointer(const VarPointer& vp, const ContainerShape& shape) {
  if (vp.kind == VarPointer::Kind::LevelBucket)
    return TinyPointer(0, 1).append(gamma_encode(vp.level + 1)).append_bits(vp.slot, kLevelSlotBits);
  const unsigned back = shape.levels - 1 - vp.level;
  return TinyPointer(1, 1).append(gamma_encode(back + 1)).append_bits(vp.slot, back + 1);
}

/// Inverse of encode_var_pointer; nullopt for strings no valid pointer encodes.
inline std::optional<VarPointer> decode_var_pointer(TinyPointer p, const ContainerShape& shape) {
  if (p.empty()) return std::nullopt;
  unsigned pos = 1;
  const auto coded = gamma_decode(p, pos);
  if (!coded || *coded > shape.levels) return std::nullopt;
  const auto index = static_cast<unsigned>(*coded - 1);
  VarPointer vp;
  if (p.bit(0) == 0) {
    if (pos + kLevelSlotBits > p.length()) return std::nullopt;
    vp.kind = VarPointer::Kind::LevelBucket;
    vp.level = index;
    vp.slot = p.read(pos, kLevelSlotBits);
  } else {
    const unsigned width = index + 1;
    if (pos + width > p.length()) return std::nullopt;
    vp.kind = VarPointer::Kind::Overflow;
    vp.level = shape.levels - 1 - index;
    vp.slot = p.read(pos, width);
  }
  return vp;
}

// ---------------------------------------------------------------------------
// Lookup-table placement for the deepest levels

/// Where an allocation lands among the tail levels d, d+1, ... of a container.
struct TailDecision {
  unsigned level = 0;  // relative to d
  bool overflow = false;
  std::uint64_t slot = 0;

  friend constexpr bool operator==(const TailDecision&, const TailDecision&) = default;
};

/// Everything the placement rule reads from levels d.. for one key: the
/// occupancy byte of the key's bucket at each level, whether descending past
/// the level is blocked (L[i+1] >= s_{i+1}, always true at the last level),
/// and each level's overflow occupancy.
struct TailState {
  static constexpr unsigned kMaxLevels = 8;

  unsigned levels = 0;
  std::array<std::uint8_t, kMaxLevels> bucket_bits{};
  std::array<bool, kMaxLevels> blocked{};
  std::array<std::uint64_t, kMaxLevels> overflow_bits{};
  std::array<std::uint64_t, kMaxLevels> overflow_size{};
};

inline std::uint64_t lowest_clear(std::uint64_t word, std::uint64_t width) noexcept {
  const auto pos = static_cast<std::uint64_t>(std::countr_one(word));
  return std::min(pos, width == 0 ? 0 : width - 1);
}

/// The placement rule applied level by level.
inline TailDecision iterative_tail_decision(const TailState& state) noexcept {
  for (unsigned k = 0; k < state.levels; ++k) {
    if (state.bucket_bits[k] != 0xFF)
      return {k, false, static_cast<std::uint64_t>(std::countr_one(state.bucket_bits[k]))};
    if (state.blocked[k] || k + 1 == state.levels)
      return {k, true, lowest_clear(state.overflow_bits[k], state.overflow_size[k])};
  }
  return {};
}

/// Method of four Russians over the tail levels: the rule only depends on two
/// bits per level (bucket full, descent blocked), so a table indexed by those
/// bits yields the level and kind in one lookup. The slot then comes from a
/// byte table or a single count-trailing-ones.
class LevelLookupTable {
 public:
  static constexpr unsigned kMaxTailLevels = TailState::kMaxLevels;

  explicit LevelLookupTable(unsigned tail_levels) : levels_(tail_levels) {
    if (tail_levels == 0 || tail_levels > kMaxTailLevels)
      throw InvalidParams("lookup table supports 1..8 tail levels");
    table_.resize(std::size_t{1} << (2 * tail_levels));
    for (std::size_t phi = 0; phi < table_.size(); ++phi) {
      Entry e{};
      for (unsigned k = 0; k < levels_; ++k) {
        const bool full = (phi >> (2 * k)) & 1U;
        const bool blocked = ((phi >> (2 * k + 1)) & 1U) || k + 1 == levels_;
        if (!full) {
          e = {static_cast<std::uint8_t>(k), false};
          break;
        }
        if (blocked) {
          e = {static_cast<std::uint8_t>(k), true};
          break;
        }
      }
      table_[phi] = e;
    }
    for (unsigned byte = 0; byte < 256; ++byte)
      first_free_[byte] = static_cast<std::uint8_t>(std::countr_one(static_cast<std::uint8_t>(byte)));
  }

  unsigned tail_levels() const noexcept { return levels_; }
  std::size_t entries() const noexcept { return table_.size(); }

  std::size_t index_of(const TailState& state) const noexcept {
    std::size_t phi = 0;
    for (unsigned k = 0; k < levels_; ++k) {
      phi |= static_cast<std::size_t>(state.bucket_bits[k] == 0xFF) << (2 * k);
      phi |= static_cast<std::size_t>(state.blocked[k]) << (2 * k + 1);
    }
    return phi;
  }

  TailDecision decide(const TailState& state) const noexcept {
    const Entry e = table_[index_of(state)];
    if (!e.overflow) return {e.level, false, first_free_[state.bucket_bits[e.level]]};
    return {e.level, true, lowest_clear(state.overflow_bits[e.level], state.overflow_size[e.level])};
  }

 private:
  struct Entry {
    std::uint8_t level = 0;
    bool overflow = false;
  };

  unsigned levels_;
  std::vector<Entry> table_;
  std::array<std::uint8_t, 256> first_free_{};
};

// ---------------------------------------------------------------------------

/// Variable-size tiny pointers with Ω(1) load factor.
///
/// Keys hash to one of max(1, ceil(N / lg N)) containers of capacity s, the
/// next power of two >= 4 lg N. Inside a container an allocation walks the
/// levels: L[i] (live values at levels >= i) is incremented on the way down,
/// the key tries its bucket at level i, and when that bucket is full it
/// descends only if L[i+1] < s_{i+1}; otherwise it takes the overflow array of
/// level i. Hence L[i] <= s_i always and no overflow array can run out.
/// Allocation fails only when the container already holds s values.
class VariableTable {
 public:
  /// Levels handled by the lookup table start here when it is enabled.
  static constexpr unsigned kLookupFirstLevel = 3;

  static unsigned log_capacity(std::uint64_t n) noexcept {
    return std::max(1U, index_bits(n));
  }
  static std::uint64_t containers_for(std::uint64_t n) noexcept {
    const unsigned lg = log_capacity(n);
    return std::max<std::uint64_t>(1, (n + lg - 1) / lg);
  }
  static std::uint64_t container_capacity_for(std::uint64_t n) noexcept {
    return std::bit_ceil(std::uint64_t{4} * log_capacity(n));
  }
  /// Total slots of a table of capacity n: each container has
  /// sum_i s_i (b + 1) = (2s - 2)(b + 1) slots.
  static std::uint64_t slots_for(std::uint64_t n) noexcept {
    return containers_for(n) * (2 * container_capacity_for(n) - 2) * (kLevelBucketSize + 1);
  }

  /// Largest key capacity whose layout fits in `slot_budget` slots.
  static std::optional<std::uint64_t> capacity_for_slot_budget(std::uint64_t slot_budget) {
    std::optional<std::uint64_t> best;
    std::uint64_t n = 1;
    // Slot counts grow at least linearly in n, so n never needs to pass the budget.
    for (; n <= slot_budget; ++n)
      if (slots_for(n) <= slot_budget) best = n;
    return best;
  }

  VariableTable(std::uint64_t capacity, HashSeed seed, bool use_lookup = false)
      : n_(checked_capacity(capacity)),
        shape_(ContainerShape::for_capacity(container_capacity_for(capacity))),
        num_containers_(containers_for(capacity)),
        container_seed_(derive_seed(seed, 0)),
        level_seed_(derive_seed(seed, 1)),
        overflow_words_((shape_.buckets + 63) / 64),
        counters_per_container_(shape_.levels + 1),
        buckets_(num_containers_ * shape_.buckets, 0),
        overflow_(num_containers_ * overflow_words_, 0),
        counters_(num_containers_ * counters_per_container_, 0) {
    if (use_lookup && shape_.levels > kLookupFirstLevel)
      lookup_.emplace(shape_.levels - kLookupFirstLevel);
  }

  std::optional<TinyPointer> allocate(std::uint64_t key) {
    const std::uint64_t c = container_of(key);
    std::uint16_t* L = counters(c);
    if (L[0] >= shape_.capacity) {
      stats_.record_failure();
      return std::nullopt;
    }
    const std::optional<VarPointer> vp = lookup_ ? place_with_lookup(c, key) : place(c, key, 0);
    const TinyPointer p = encode_var_pointer(*vp, shape_);
    check_container(c);
    stats_.record_success(p);
    return p;
  }

  SlotIndex dereference(std::uint64_t key, TinyPointer p) const noexcept {
    const std::uint64_t c = container_of(key);
    const std::uint64_t base = c * shape_.slots;
    const auto vp = decode_var_pointer(p, shape_);
    if (!vp) return SlotIndex{base};
    return SlotIndex{base + container_slot(key, *vp)};
  }

  void free(std::uint64_t key, TinyPointer p) {
    const std::uint64_t c = container_of(key);
    const auto vp = decode_var_pointer(p, shape_);
    TINYPTR_INVARIANT(vp.has_value(), "free of an undecodable pointer");
    if (!vp) return;
    if (vp->kind == VarPointer::Kind::LevelBucket) {
      const std::uint64_t bucket = bucket_of(key, vp->level);
      bucket_byte(c, vp->level, bucket) &= static_cast<std::uint8_t>(~(1U << vp->slot));
    } else {
      set_overflow(c, vp->level, vp->slot, false);
    }
    std::uint16_t* L = counters(c);
    for (unsigned i = 0; i <= vp->level; ++i) --L[i];
    check_container(c);
    stats_.record_free();
  }

  std::uint64_t container_of(std::uint64_t key) const noexcept {
    return hash_to_range(container_seed_, key, num_containers_);
  }
  std::uint64_t bucket_of(std::uint64_t key, unsigned level) const noexcept {
    return hash_stream(level_seed_, key, level, shape_.level_size(level));
  }

  /// Offset within the container of the slot a decoded pointer names.
  std::uint64_t container_slot(std::uint64_t key, const VarPointer& vp) const noexcept {
    if (vp.kind == VarPointer::Kind::LevelBucket)
      return shape_.level_slot_offset[vp.level] + bucket_of(key, vp.level) * kLevelBucketSize +
             vp.slot;
    return shape_.overflow_slot_offset(vp.level) + vp.slot;
  }

  bool occupied(SlotIndex s) const noexcept {
    const std::uint64_t c = s.value / shape_.slots;
    const std::uint64_t off = s.value % shape_.slots;
    unsigned level = shape_.levels - 1;
    while (level > 0 && shape_.level_slot_offset[level] > off) --level;
    const std::uint64_t within = off - shape_.level_slot_offset[level];
    const std::uint64_t lbt_slots = shape_.level_size(level) * kLevelBucketSize;
    if (within < lbt_slots)
      return (bucket_byte(c, level, within / kLevelBucketSize) >> (within % kLevelBucketSize)) & 1U;
    return overflow_bit(c, level, within - lbt_slots);
  }

  /// L[i] for container c as maintained.
  std::uint64_t level_counter(std::uint64_t c, unsigned i) const noexcept {
    return counters_[c * counters_per_container_ + i];
  }

  /// L[i] recomputed from occupancy bits.
  std::uint64_t recount_level(std::uint64_t c, unsigned i) const noexcept {
    std::uint64_t total = 0;
    for (unsigned level = i; level < shape_.levels; ++level) total += stored_at_level(c, level);
    return total;
  }

  std::uint64_t stored_in_buckets(std::uint64_t c, unsigned level) const noexcept {
    std::uint64_t total = 0;
    for (std::uint64_t b = 0; b < shape_.level_size(level); ++b)
      total += static_cast<std::uint64_t>(std::popcount(bucket_byte(c, level, b)));
    return total;
  }
  std::uint64_t stored_in_overflow(std::uint64_t c, unsigned level) const noexcept {
    std::uint64_t total = 0;
    for (std::uint64_t j = 0; j < shape_.level_size(level); ++j) total += overflow_bit(c, level, j);
    return total;
  }
  std::uint64_t stored_at_level(std::uint64_t c, unsigned level) const noexcept {
    return stored_in_buckets(c, level) + stored_in_overflow(c, level);
  }

  /// Full scan of the deterministic capacity guarantees of one container.
  bool container_within_capacity(std::uint64_t c) const noexcept {
    for (unsigned i = 0; i < shape_.levels; ++i) {
      if (level_counter(c, i) > shape_.level_size(i)) return false;
      if (stored_in_overflow(c, i) > shape_.level_size(i)) return false;
    }
    return level_counter(c, 0) <= shape_.capacity;
  }

  bool within_capacity() const noexcept {
    for (std::uint64_t c = 0; c < num_containers_; ++c)
      if (!container_within_capacity(c)) return false;
    return true;
  }

  bool counters_match_occupancy() const noexcept {
    for (std::uint64_t c = 0; c < num_containers_; ++c)
      for (unsigned i = 0; i <= shape_.levels; ++i)
        if (level_counter(c, i) != (i == shape_.levels ? 0 : recount_level(c, i))) return false;
    return true;
  }

  /// Live values at each level (bucket and overflow slots together), by scan.
  std::vector<std::uint64_t> level_histogram() const {
    std::vector<std::uint64_t> hist(shape_.levels, 0);
    for (std::uint64_t c = 0; c < num_containers_; ++c)
      for (unsigned i = 0; i < shape_.levels; ++i) hist[i] += stored_at_level(c, i);
    return hist;
  }

  TailState tail_state(std::uint64_t c, std::uint64_t key, unsigned first_level) const noexcept {
    TailState state;
    state.levels = shape_.levels - first_level;
    for (unsigned k = 0; k < state.levels; ++k) {
      const unsigned i = first_level + k;
      state.bucket_bits[k] = bucket_byte(c, i, bucket_of(key, i));
      state.blocked[k] =
          i + 1 == shape_.levels || level_counter(c, i + 1) >= shape_.level_size(i + 1);
      state.overflow_bits[k] = overflow_word(c, i);
      state.overflow_size[k] = shape_.level_size(i);
    }
    return state;
  }

  std::uint64_t capacity() const noexcept { return n_; }
  std::uint64_t slot_count() const noexcept { return num_containers_ * shape_.slots; }
  std::uint64_t num_containers() const noexcept { return num_containers_; }
  const ContainerShape& shape() const noexcept { return shape_; }
  bool uses_lookup() const noexcept { return lookup_.has_value(); }
  const TableStats& stats() const noexcept { return stats_; }
  std::uint64_t metadata_bits() const noexcept {
    return buckets_.size() * 8 + overflow_.size() * 64 + counters_.size() * 16;
  }

  /// Same occupancy and counters (stats are not compared).
  friend bool operator==(const VariableTable& a, const VariableTable& b) {
    return a.buckets_ == b.buckets_ && a.overflow_ == b.overflow_ && a.counters_ == b.counters_;
  }

 private:
  static std::uint64_t checked_capacity(std::uint64_t n) {
    if (n == 0) throw InvalidParams("variable table needs capacity >= 1");
    return n;
  }

  std::uint16_t* counters(std::uint64_t c) noexcept {
    return counters_.data() + c * counters_per_container_;
  }

  std::uint8_t& bucket_byte(std::uint64_t c, unsigned level, std::uint64_t bucket) noexcept {
    return buckets_[c * shape_.buckets + shape_.level_bucket_offset[level] + bucket];
  }
  std::uint8_t bucket_byte(std::uint64_t c, unsigned level, std::uint64_t bucket) const noexcept {
    return buckets_[c * shape_.buckets + shape_.level_bucket_offset[level] + bucket];
  }

  bool overflow_bit(std::uint64_t c, unsigned level, std::uint64_t j) const noexcept {
    const std::uint64_t pos = shape_.level_bucket_offset[level] + j;
    return (overflow_[c * overflow_words_ + pos / 64] >> (pos % 64)) & 1U;
  }
  void set_overflow(std::uint64_t c, unsigned level, std::uint64_t j, bool value) noexcept {
    const std::uint64_t pos = shape_.level_bucket_offset[level] + j;
    std::uint64_t& w = overflow_[c * overflow_words_ + pos / 64];
    const std::uint64_t mask = std::uint64_t{1} << (pos % 64);
    w = value ? (w | mask) : (w & ~mask);
  }
  /// The s_i overflow bits of a level packed into one word (s_i <= 64 for levels >= 2
  /// at every capacity this table supports; wider levels report their low 64 bits).
  std::uint64_t overflow_word(std::uint64_t c, unsigned level) const noexcept {
    const std::uint64_t width = std::min<std::uint64_t>(shape_.level_size(level), 64);
    std::uint64_t out = 0;
    for (std::uint64_t j = 0; j < width; ++j)
      out |= static_cast<std::uint64_t>(overflow_bit(c, level, j)) << j;
    return out;
  }

  std::uint64_t first_free_overflow(std::uint64_t c, unsigned level) const noexcept {
    for (std::uint64_t j = 0; j < shape_.level_size(level); ++j)
      if (!overflow_bit(c, level, j)) return j;
    TINYPTR_INVARIANT(false, "overflow array full");
    return 0;
  }

  /// The placement rule, starting at `first_level` with L already incremented
  /// for the levels above it.
  std::optional<VarPointer> place(std::uint64_t c, std::uint64_t key, unsigned first_level) {
    std::uint16_t* L = counters(c);
    for (unsigned i = first_level; i < shape_.levels; ++i) {
      ++L[i];
      const std::uint64_t bucket = bucket_of(key, i);
      std::uint8_t& bits = bucket_byte(c, i, bucket);
      if (bits != 0xFF) {
        const auto j = static_cast<unsigned>(std::countr_one(bits));
        bits = static_cast<std::uint8_t>(bits | (1U << j));
        return VarPointer{VarPointer::Kind::LevelBucket, i, j};
      }
      const bool last = i + 1 == shape_.levels;
      if (last || L[i + 1] >= shape_.level_size(i + 1)) {
        const std::uint64_t j = first_free_overflow(c, i);
        set_overflow(c, i, j, true);
        return VarPointer{VarPointer::Kind::Overflow, i, j};
      }
    }
    return std::nullopt;
  }

  std::optional<VarPointer> place_with_lookup(std::uint64_t c, std::uint64_t key) {
    std::uint16_t* L = counters(c);
    for (unsigned i = 0; i < kLookupFirstLevel; ++i) {
      ++L[i];
      const std::uint64_t bucket = bucket_of(key, i);
      std::uint8_t& bits = bucket_byte(c, i, bucket);
      if (bits != 0xFF) {
        const auto j = static_cast<unsigned>(std::countr_one(bits));
        bits = static_cast<std::uint8_t>(bits | (1U << j));
        return VarPointer{VarPointer::Kind::LevelBucket, i, j};
      }
      if (L[i + 1] >= shape_.level_size(i + 1)) {
        const std::uint64_t j = first_free_overflow(c, i);
        set_overflow(c, i, j, true);
        return VarPointer{VarPointer::Kind::Overflow, i, j};
      }
    }
    const TailDecision d = lookup_->decide(tail_state(c, key, kLookupFirstLevel));
    const unsigned level = kLookupFirstLevel + d.level;
    for (unsigned i = kLookupFirstLevel; i <= level; ++i) ++L[i];
    if (d.overflow) {
      set_overflow(c, level, d.slot, true);
      return VarPointer{VarPointer::Kind::Overflow, level, d.slot};
    }
    bucket_byte(c, level, bucket_of(key, level)) |= static_cast<std::uint8_t>(1U << d.slot);
    return VarPointer{VarPointer::Kind::LevelBucket, level, d.slot};
  }

  void check_container([[maybe_unused]] std::uint64_t c) const noexcept {
#ifdef TINYPTR_CHECK_INVARIANTS
    for (unsigned i = 0; i < shape_.levels; ++i) {
      TINYPTR_INVARIANT(level_counter(c, i) <= shape_.level_size(i), "L[i] <= s_i");
      TINYPTR_INVARIANT(stored_in_overflow(c, i) <= shape_.level_size(i),
                        "overflow occupancy <= s_i");
    }
#endif
  }

  std::uint64_t n_;
  ContainerShape shape_;
  std::uint64_t num_containers_;
  HashSeed container_seed_;
  HashSeed level_seed_;
  std::uint64_t overflow_words_;
  std::uint64_t counters_per_container_;
  std::vector<std::uint8_t> buckets_;
  std::vector<std::uint64_t> overflow_;
  std::vector<std::uint16_t> counters_;
  std::optional<LevelLookupTable> lookup_;
  TableStats stats_;
};

/// Variable-size pointers at load factor 1 - delta: a load-balancing table
/// over ceil((1 - delta/2) n) slots takes almost every key, and its failures
/// go to a VariableTable laid out in the remaining slots. Pointer:
/// selector ∥ sub-pointer, where primary sub-pointers have fixed width and
/// secondary ones are variable.
class WrappedVariableTable {
 public:
  static constexpr std::uint64_t kMinSlots = 16;

  WrappedVariableTable(std::uint64_t n, double delta, HashSeed seed, bool use_lookup = false)
      : n_(checked_slots(n, delta)),
        delta_(delta),
        m1_(FixedTable::primary_slots_for(n, delta)),
        primary_(m1_, delta * delta / FixedTable::kPrimarySlackDivisor, derive_seed(seed, 0)) {
    if (auto capacity = VariableTable::capacity_for_slot_budget(n - m1_))
      secondary_.emplace(*capacity, derive_seed(seed, 1), use_lookup);
  }

  std::optional<TinyPointer> allocate(std::uint64_t key) {
    if (auto p = primary_.allocate(key)) return finish(TinyPointer(0, 1).append(*p));
    if (secondary_) {
      if (auto p = secondary_->allocate(key)) {
        ++secondary_live_;
        return finish(TinyPointer(1, 1).append(*p));
      }
    }
    stats_.record_failure();
    return std::nullopt;
  }

  SlotIndex dereference(std::uint64_t key, TinyPointer p) const noexcept {
    if (p.read(0, 1) == 0 || !secondary_) return primary_.dereference(key, primary_sub(p));
    return SlotIndex{m1_ + secondary_->dereference(key, p.drop_front(1)).value};
  }

  void free(std::uint64_t key, TinyPointer p) {
    if (p.read(0, 1) == 0 || !secondary_) {
      primary_.free(key, primary_sub(p));
    } else {
      secondary_->free(key, p.drop_front(1));
      --secondary_live_;
    }
    stats_.record_free();
  }

  bool occupied(SlotIndex s) const noexcept {
    if (s.value < m1_) return primary_.occupied(s);
    return secondary_ && s.value - m1_ < secondary_->slot_count() &&
           secondary_->occupied(SlotIndex{s.value - m1_});
  }

  /// Typical pointer length: selector plus the primary's fixed width.
  unsigned nominal_pointer_bits() const noexcept { return 1 + primary_.pointer_bits(); }

  std::uint64_t slot_count() const noexcept { return n_; }
  double delta() const noexcept { return delta_; }
  std::uint64_t primary_slots() const noexcept { return m1_; }
  std::uint64_t secondary_live() const noexcept { return secondary_live_; }
  const LoadBalancingTable& primary() const noexcept { return primary_; }
  const std::optional<VariableTable>& secondary() const noexcept { return secondary_; }
  const TableStats& stats() const noexcept { return stats_; }
  std::uint64_t metadata_bits() const noexcept {
    return primary_.metadata_bits() + (secondary_ ? secondary_->metadata_bits() : 0) + 64;
  }

 private:
  static std::uint64_t checked_slots(std::uint64_t n, double delta) {
    require_delta(delta);
    if (n < kMinSlots) throw InvalidParams("wrapped variable table needs at least 16 slots");
    return n;
  }

  TinyPointer primary_sub(TinyPointer p) const noexcept {
    return TinyPointer(p.read(1, primary_.pointer_bits()), primary_.pointer_bits());
  }

  TinyPointer finish(TinyPointer p) {
    stats_.record_success(p);
    return p;
  }

  std::uint64_t n_;
  double delta_;
  std::uint64_t m1_;
  LoadBalancingTable primary_;
  std::optional<VariableTable> secondary_;
  std::uint64_t secondary_live_ = 0;
  TableStats stats_;
};

static_assert(DereferenceTable<VariableTable>);
static_assert(DereferenceTable<WrappedVariableTable>);

}  // namespace tinyptr
