#pragma once

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinyptr/core.hpp"
#include "tinyptr/hashing.hpp"

namespace tinyptr {

enum class WorkloadKind : std::uint8_t { Churn, Fifo, Reinsert };

inline std::string_view to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Churn: return "churn";
    case WorkloadKind::Fifo: return "fifo";
    case WorkloadKind::Reinsert: return "reinsert";
  }
  return "?";
}

inline std::optional<WorkloadKind> parse_workload_kind(std::string_view s) {
  if (s == "churn") return WorkloadKind::Churn;
  if (s == "fifo") return WorkloadKind::Fifo;
  if (s == "reinsert") return WorkloadKind::Reinsert;
  return std::nullopt;
}

/// Oblivious-adversary workloads that keep at most `live_cap` keys present.
///
/// Every generator first fills to the cap and then alternates a free with an
/// allocate:
///   churn    frees a uniformly random live key, allocates a fresh key;
///   fifo     frees the oldest live key, allocates a fresh key;
///   reinsert cycles a fixed universe of cap + max(1, cap/16) keys, freeing a
///            random live key and re-allocating the longest-absent one.
class WorkloadGenerator {
 public:
  WorkloadGenerator(WorkloadKind kind, std::uint64_t live_cap, std::uint64_t seed)
      : kind_(kind), cap_(live_cap), rng_(seed), key_salt_(hash::mix64(seed ^ 0x5bd1e995ULL)) {
    if (live_cap == 0) throw InvalidParams("workload needs a positive live cap");
    if (kind_ == WorkloadKind::Reinsert) {
      const std::uint64_t universe = cap_ + std::max<std::uint64_t>(1, cap_ / 16);
      for (std::uint64_t i = 0; i < universe; ++i) absent_.push_back(fresh_key());
    }
  }

  WorkloadOp next() {
    if (live_count() < cap_) {
      std::uint64_t key;
      if (kind_ == WorkloadKind::Reinsert) {
        key = absent_.front();
        absent_.pop_front();
      } else {
        key = fresh_key();
      }
      if (kind_ == WorkloadKind::Fifo) {
        fifo_.push_back(key);
      } else {
        live_.push_back(key);
      }
      return {OpKind::Allocate, key};
    }
    std::uint64_t key;
    if (kind_ == WorkloadKind::Fifo) {
      key = fifo_.front();
      fifo_.pop_front();
    } else {
      const std::uint64_t i = rng_.below(live_.size());
      key = live_[i];
      live_[i] = live_.back();
      live_.pop_back();
      if (kind_ == WorkloadKind::Reinsert) absent_.push_back(key);
    }
    return {OpKind::Free, key};
  }

  std::uint64_t live_count() const noexcept {
    return kind_ == WorkloadKind::Fifo ? fifo_.size() : live_.size();
  }
  std::uint64_t live_cap() const noexcept { return cap_; }
  WorkloadKind kind() const noexcept { return kind_; }

  /// A live key chosen uniformly, for interleaved reads.
  std::optional<std::uint64_t> sample_live() {
    if (live_count() == 0) return std::nullopt;
    return live_key(rng_.below(live_count()));
  }

  /// The i-th live key in some internal order, i < live_count().
  std::uint64_t live_key(std::uint64_t i) const noexcept {
    return kind_ == WorkloadKind::Fifo ? fifo_[i] : live_[i];
  }

 private:
  // mix64 is a bijection, so distinct counters give distinct keys.
  std::uint64_t fresh_key() noexcept { return hash::mix64(key_salt_ + counter_++); }

  WorkloadKind kind_;
  std::uint64_t cap_;
  SplitMix64 rng_;
  std::uint64_t key_salt_;
  std::uint64_t counter_ = 0;
  std::vector<std::uint64_t> live_;
  std::deque<std::uint64_t> fifo_;
  std::deque<std::uint64_t> absent_;
};

inline std::vector<WorkloadOp> generate_workload(WorkloadKind kind, std::uint64_t live_cap,
                                                 std::uint64_t ops, std::uint64_t seed) {
  WorkloadGenerator gen(kind, live_cap, seed);
  std::vector<WorkloadOp> out;
  out.reserve(ops);
  for (std::uint64_t i = 0; i < ops; ++i) out.push_back(gen.next());
  return out;
}

/// First index at which `ops` breaks the one-pointer-per-key discipline or
/// exceeds `live_cap` present keys, if any.
inline std::optional<std::size_t> find_workload_violation(const std::vector<WorkloadOp>& ops,
                                                          std::uint64_t live_cap) {
  absl::flat_hash_set<std::uint64_t> present;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    switch (op.kind) {
      case OpKind::Allocate:
        if (!present.insert(op.key).second || present.size() > live_cap) return i;
        break;
      case OpKind::Free:
        if (present.erase(op.key) == 0) return i;
        break;
      case OpKind::Dereference:
        if (!present.contains(op.key)) return i;
        break;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayStats {
  std::uint64_t ops = 0;
  std::uint64_t allocations = 0;
  std::uint64_t failures = 0;
  std::uint64_t frees = 0;
  std::uint64_t skipped_frees = 0;  // frees of keys whose allocation failed
  std::uint64_t failed_alive = 0;
  std::uint64_t max_failed_alive = 0;
};

/// Drives a table with workload ops, remembering each present key's pointer.
/// A failed allocation stays "alive" until the workload frees the key; that
/// free is dropped instead of reaching the table.
template <DereferenceTable Table>
class Replayer {
 public:
  explicit Replayer(Table& table) : table_(table) { live_.reserve(table.slot_count()); }

  void apply(const WorkloadOp& op) {
    ++stats_.ops;
    switch (op.kind) {
      case OpKind::Allocate: {
        ++stats_.allocations;
        auto p = table_.allocate(op.key);
        if (p) {
          live_.insert_or_assign(op.key, Entry{*p, false});
        } else {
          ++stats_.failures;
          live_.insert_or_assign(op.key, Entry{{}, true});
          ++stats_.failed_alive;
          stats_.max_failed_alive = std::max(stats_.max_failed_alive, stats_.failed_alive);
        }
        break;
      }
      case OpKind::Free: {
        auto it = live_.find(op.key);
        if (it == live_.end()) throw ContractViolation("free of a key that is not present");
        if (it->second.failed) {
          ++stats_.skipped_frees;
          --stats_.failed_alive;
        } else {
          ++stats_.frees;
          table_.free(op.key, it->second.pointer);
        }
        live_.erase(it);
        break;
      }
      case OpKind::Dereference: {
        auto it = live_.find(op.key);
        if (it == live_.end()) throw ContractViolation("dereference of a key that is not present");
        if (!it->second.failed) (void)table_.dereference(op.key, it->second.pointer);
        break;
      }
    }
  }

  /// Pointer of a present key whose allocation succeeded.
  std::optional<TinyPointer> pointer_of(std::uint64_t key) const {
    auto it = live_.find(key);
    if (it == live_.end() || it->second.failed) return std::nullopt;
    return it->second.pointer;
  }

  template <class Fn>
  void for_each_live(Fn&& fn) const {
    for (const auto& [key, entry] : live_)
      if (!entry.failed) fn(key, entry.pointer);
  }

  const ReplayStats& stats() const noexcept { return stats_; }
  Table& table() noexcept { return table_; }

 private:
  struct Entry {
    TinyPointer pointer;
    bool failed = false;
  };

  Table& table_;
  absl::flat_hash_map<std::uint64_t, Entry> live_;
  ReplayStats stats_;
};

}  // namespace tinyptr
