#pragma once

#include <absl/container/flat_hash_map.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tinyptr/core.hpp"

namespace tinyptr {

/// Test companion for any dereference table. Records key -> (pointer, slot)
/// and a slot -> owner map, and raises ContractViolation when a caller breaks
/// the allocate/free preconditions or when the table hands out a slot that a
/// present key already owns. Excluded from all space accounting.
template <DereferenceTable Table>
class ShadowVerified {
 public:
  explicit ShadowVerified(Table& table) : table_(table), owner_(table.slot_count()) {}

  std::optional<TinyPointer> allocate(std::uint64_t key) {
    if (live_.contains(key)) throw ContractViolation("allocate of a present key");
    auto p = table_.allocate(key);
    if (!p) return p;
    const SlotIndex slot = table_.dereference(key, *p);
    if (slot.value >= owner_.size()) throw ContractViolation("slot out of range");
    if (owner_[slot.value])
      throw ContractViolation("slot " + std::to_string(slot.value) + " handed to two present keys");
    owner_[slot.value] = key;
    live_.emplace(key, Record{*p, slot});
    return p;
  }

  SlotIndex dereference(std::uint64_t key, TinyPointer p) const { return table_.dereference(key, p); }

  void free(std::uint64_t key, TinyPointer p) {
    auto it = live_.find(key);
    if (it == live_.end()) throw ContractViolation("free of a key that is not present");
    if (!(it->second.pointer == p)) throw ContractViolation("free with a stale pointer");
    owner_[it->second.slot.value].reset();
    live_.erase(it);
    table_.free(key, p);
  }

  /// Every present key still dereferences to the slot recorded at allocation.
  bool stable() const {
    for (const auto& [key, rec] : live_)
      if (table_.dereference(key, rec.pointer) != rec.slot) return false;
    return true;
  }

  std::optional<SlotIndex> slot_of(std::uint64_t key) const {
    auto it = live_.find(key);
    if (it == live_.end()) return std::nullopt;
    return it->second.slot;
  }

  std::uint64_t live() const noexcept { return live_.size(); }
  std::uint64_t slot_count() const noexcept { return table_.slot_count(); }
  const TableStats& stats() const noexcept { return table_.stats(); }
  std::uint64_t metadata_bits() const noexcept { return table_.metadata_bits(); }
  Table& table() noexcept { return table_; }

 private:
  struct Record {
    TinyPointer pointer;
    SlotIndex slot;
  };

  Table& table_;
  std::vector<std::optional<std::uint64_t>> owner_;
  absl::flat_hash_map<std::uint64_t, Record> live_;
};

}  // namespace tinyptr
