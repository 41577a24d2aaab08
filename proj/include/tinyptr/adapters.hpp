#pragma once

#include <absl/container/flat_hash_map.h>

#include <bit>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "tinyptr/bitcodec.hpp"
#include "tinyptr/core.hpp"
#include "tinyptr/hashing.hpp"
#include "tinyptr/variable.hpp"

namespace tinyptr {

class CapacityExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AllocationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dictionary whose values never move between insert and delete.
///
/// The inner dictionary maps each key to a position in an array of tiny
/// pointers; the pointer names a slot of a (1 + 1/v)m-slot dereference table
/// and the v-bit value lives in that slot. Moving entries of the inner
/// dictionary moves pointers only, never values.
class StableDict {
 public:
  static constexpr unsigned kChunkedBelowBits = 64;

  StableDict(std::uint64_t m, unsigned v, HashSeed seed)
      : m_(checked_capacity(m, v)),
        v_(v),
        table_(table_slots(m, v), 1.0 / (static_cast<double>(v) + 1.0), seed),
        store_(table_.slot_count(), 0),
        keys_(),
        pointers_(make_pointer_array(m, v, table_)) {
    keys_.reserve(m);
    index_.reserve(m);
  }

  /// ceil((1 + 1/v) m), but never below the table's minimum size.
  static std::uint64_t table_slots(std::uint64_t m, unsigned v) {
    return std::max(WrappedVariableTable::kMinSlots, m + (m + v - 1) / v);
  }

  SlotIndex insert(std::uint64_t key, std::uint64_t value) {
    if (index_.contains(key)) throw ContractViolation("insert of a present key");
    if (index_.size() >= m_) throw CapacityExceeded("stable dictionary is at capacity");
    auto p = table_.allocate(key);
    if (!p) throw AllocationFailure("dereference table refused an allocation");
    const SlotIndex slot = table_.dereference(key, *p);
    store_[slot.value] = value & value_mask();
    const std::uint64_t pos = keys_.size();
    keys_.push_back(key);
    index_.emplace(key, pos);
    put_pointer(pos, *p);
    pointer_bits_ += p->length();
    return slot;
  }

  /// (value, slot) of a present key.
  std::optional<std::pair<std::uint64_t, SlotIndex>> get(std::uint64_t key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    const SlotIndex slot = table_.dereference(key, pointer_at(it->second));
    return std::pair{store_[slot.value], slot};
  }

  void erase(std::uint64_t key) {
    auto it = index_.find(key);
    if (it == index_.end()) throw ContractViolation("delete of an absent key");
    const std::uint64_t pos = it->second;
    const TinyPointer p = pointer_at(pos);
    table_.free(key, p);
    pointer_bits_ -= p.length();
    index_.erase(it);

    const std::uint64_t last = keys_.size() - 1;
    if (pos != last) {
      const std::uint64_t moved = keys_[last];
      keys_[pos] = moved;
      put_pointer(pos, pointer_at(last));
      index_[moved] = pos;
    }
    put_pointer(last, TinyPointer{});
    keys_.pop_back();
  }

  bool contains(std::uint64_t key) const { return index_.contains(key); }
  std::uint64_t size() const noexcept { return keys_.size(); }
  std::uint64_t capacity() const noexcept { return m_; }
  unsigned value_bits() const noexcept { return v_; }
  bool chunked() const noexcept { return std::holds_alternative<ChunkedPointerArray>(pointers_); }

  /// Mean length of the tiny pointers currently stored.
  double mean_pointer_bits() const noexcept {
    return keys_.empty() ? 0.0 : static_cast<double>(pointer_bits_) / static_cast<double>(keys_.size());
  }

  const WrappedVariableTable& table() const noexcept { return table_; }

 private:
  using PointerArray = std::variant<ChunkedPointerArray, std::vector<TinyPointer>>;

  static std::uint64_t checked_capacity(std::uint64_t m, unsigned v) {
    if (m == 0) throw InvalidParams("stable dictionary needs m >= 1");
    if (v == 0 || v > 64) throw InvalidParams("value width must be in [1, 64]");
    return m;
  }

  static PointerArray make_pointer_array(std::uint64_t m, unsigned v, const WrappedVariableTable& t) {
    if (v < kChunkedBelowBits) {
      // Tiny dictionaries would get chunks shorter than a single pointer.
      const auto log_m = std::max({1U, static_cast<unsigned>(std::bit_width(m - 1)), t.nominal_pointer_bits()});
      return ChunkedPointerArray(m, log_m, static_cast<double>(t.nominal_pointer_bits()));
    }
    return std::vector<TinyPointer>(m);
  }

  std::uint64_t value_mask() const noexcept {
    return v_ >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << v_) - 1;
  }

  TinyPointer pointer_at(std::uint64_t pos) const {
    if (const auto* chunked = std::get_if<ChunkedPointerArray>(&pointers_)) return chunked->get(pos);
    return std::get<std::vector<TinyPointer>>(pointers_)[pos];
  }

  void put_pointer(std::uint64_t pos, TinyPointer p) {
    if (auto* chunked = std::get_if<ChunkedPointerArray>(&pointers_)) {
      chunked->set(pos, p);
    } else {
      std::get<std::vector<TinyPointer>>(pointers_)[pos] = p;
    }
  }

  std::uint64_t m_;
  unsigned v_;
  WrappedVariableTable table_;
  std::vector<std::uint64_t> store_;
  std::vector<std::uint64_t> keys_;
  absl::flat_hash_map<std::uint64_t, std::uint64_t> index_;
  PointerArray pointers_;
  std::uint64_t pointer_bits_ = 0;
};

/// Relaxed retrieval: insert hands back a tiny retriever, and a query must
/// present the same retriever. Values are kept in an ordinary associative
/// store keyed by the derived slot in [0, 2n); the dereference table stores
/// nothing.
class RelaxedRetrieval {
 public:
  static constexpr double kTableDelta = 0.5;

  RelaxedRetrieval(std::uint64_t n, HashSeed seed) : n_(n), table_(checked_slots(n), kTableDelta, seed) {
    backing_.reserve(n);
  }

  TinyPointer insert(std::uint64_t x, std::uint64_t y) {
    if (live_ >= n_) throw CapacityExceeded("relaxed retrieval is at capacity");
    auto r = table_.allocate(x);
    if (!r) throw AllocationFailure("dereference table refused an allocation");
    backing_.insert_or_assign(table_.dereference(x, *r).value, y);
    ++live_;
    retriever_bits_ += r->length();
    return *r;
  }

  /// Value stored for x. A retriever that does not belong to x yields an
  /// arbitrary value (0 when the derived slot is empty).
  std::uint64_t query(std::uint64_t x, TinyPointer r) const {
    auto it = backing_.find(table_.dereference(x, r).value);
    return it == backing_.end() ? 0 : it->second;
  }

  void erase(std::uint64_t x, TinyPointer r) {
    backing_.erase(table_.dereference(x, r).value);
    table_.free(x, r);
    --live_;
    retriever_bits_ -= r.length();
  }

  /// The slot a retriever resolves to; always below 2n.
  SlotIndex slot_of(std::uint64_t x, TinyPointer r) const noexcept { return table_.dereference(x, r); }

  double mean_retriever_bits() const noexcept {
    return live_ == 0 ? 0.0 : static_cast<double>(retriever_bits_) / static_cast<double>(live_);
  }

  std::uint64_t capacity() const noexcept { return n_; }
  std::uint64_t size() const noexcept { return live_; }
  std::uint64_t slot_universe() const noexcept { return table_.slot_count(); }
  const WrappedVariableTable& table() const noexcept { return table_; }

 private:
  static std::uint64_t checked_slots(std::uint64_t n) {
    if (n < 8) throw InvalidParams("relaxed retrieval needs n >= 8");
    return 2 * n;
  }

  std::uint64_t n_;
  WrappedVariableTable table_;
  absl::flat_hash_map<std::uint64_t, std::uint64_t> backing_;
  std::uint64_t live_ = 0;
  std::uint64_t retriever_bits_ = 0;
};

}  // namespace tinyptr
