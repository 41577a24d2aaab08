#pragma once

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tinyptr/adapters.hpp"
#include "tinyptr/ballsbins.hpp"
#include "tinyptr/core.hpp"
#include "tinyptr/fixed.hpp"
#include "tinyptr/hashing.hpp"
#include "tinyptr/lbt.hpp"
#include "tinyptr/shadow.hpp"
#include "tinyptr/variable.hpp"
#include "tinyptr/workload.hpp"

namespace tinyptr {

// ---------------------------------------------------------------------------
// Trial scheduling

/// Worker count: hardware concurrency, capped by TINYPTR_THREADS when set.
inline unsigned worker_count() {
  unsigned workers = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TINYPTR_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) workers = std::min<unsigned>(workers, static_cast<unsigned>(cap));
  }
  return workers;
}

inline HashSeed trial_seed(std::uint64_t master, std::uint64_t trial) noexcept {
  return derive_seed(HashSeed{master}, trial);
}

/// Runs fn(t) for t in [0, trials) and returns the results in trial order.
template <class Fn>
auto run_trials(std::uint64_t trials, Fn&& fn) -> std::vector<decltype(fn(std::uint64_t{0}))> {
  using Result = decltype(fn(std::uint64_t{0}));
  std::vector<std::optional<Result>> slots(trials);
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(worker_count(), trials));
  if (workers <= 1) {
    for (std::uint64_t t = 0; t < trials; ++t) slots[t].emplace(fn(t));
  } else {
    std::atomic<std::uint64_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::uint64_t t; (t = next.fetch_add(1)) < trials;) slots[t].emplace(fn(t));
        } catch (...) {
          errors[w] = std::current_exception();
          next = trials;
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<Result> out;
  out.reserve(trials);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Operation sources

/// Ops from a generator ("churn", "fifo", "reinsert") or a workload file
/// ("file:<path>"). Also tracks the present keys so callers can sample one.
class OpSource {
 public:
  static OpSource make(const std::string& spec, std::uint64_t live_cap, std::uint64_t seed) {
    if (spec.rfind("file:", 0) == 0) {
      const std::string path = spec.substr(5);
      std::ifstream in(path);
      if (!in) throw InvalidParams("cannot open workload file " + path);
      auto ops = read_workload(in);
      if (auto bad = find_workload_violation(ops, live_cap))
        throw InvalidParams("workload file " + path + " is invalid at op " + std::to_string(*bad));
      return OpSource(std::move(ops), seed);
    }
    auto kind = parse_workload_kind(spec);
    if (!kind) throw InvalidParams("unknown workload '" + spec + "'");
    return OpSource(*kind, live_cap, seed);
  }

  std::optional<WorkloadOp> next() {
    // Generated workloads track their own live keys.
    if (gen_) return gen_->next();
    if (pos_ >= file_ops_.size()) return std::nullopt;
    const WorkloadOp op = file_ops_[pos_++];
    if (op.kind == OpKind::Allocate) {
      where_.emplace(op.key, live_.size());
      live_.push_back(op.key);
    } else if (op.kind == OpKind::Free) {
      auto it = where_.find(op.key);
      const std::uint64_t at = it->second;
      where_.erase(it);
      if (at + 1 != live_.size()) {
        live_[at] = live_.back();
        where_[live_[at]] = at;
      }
      live_.pop_back();
    }
    return op;
  }

  /// A uniformly chosen present key.
  std::optional<std::uint64_t> sample_live() {
    const std::uint64_t live = live_count();
    if (live == 0) return std::nullopt;
    const std::uint64_t i = rng_.below(live);
    return gen_ ? gen_->live_key(i) : live_[i];
  }

  std::uint64_t live_count() const noexcept { return gen_ ? gen_->live_count() : live_.size(); }
  bool from_file() const noexcept { return !gen_; }
  std::uint64_t file_size() const noexcept { return file_ops_.size(); }

 private:
  OpSource(WorkloadKind kind, std::uint64_t cap, std::uint64_t seed)
      : gen_(std::make_unique<WorkloadGenerator>(kind, cap, seed)), rng_(hash::mix64(seed + 1)) {}
  OpSource(std::vector<WorkloadOp> ops, std::uint64_t seed)
      : file_ops_(std::move(ops)), rng_(hash::mix64(seed + 1)) {}

  std::unique_ptr<WorkloadGenerator> gen_;
  std::vector<WorkloadOp> file_ops_;
  std::size_t pos_ = 0;
  SplitMix64 rng_;
  std::vector<std::uint64_t> live_;
  absl::flat_hash_map<std::uint64_t, std::uint64_t> where_;
};

/// floor((1 - delta) n), the live-key cap of a table at load factor 1 - delta.
inline std::uint64_t live_cap_for(std::uint64_t n, double delta) {
  return static_cast<std::uint64_t>(std::floor((1.0 - delta) * static_cast<double>(n) + 1e-9));
}

/// Replays up to `ops` ops from `src` into `table`; calls after(op) after each.
template <DereferenceTable Table, class After>
ReplayStats replay(Replayer<Table>& rep, OpSource& src, std::uint64_t ops, After&& after) {
  for (std::uint64_t i = 0; i < ops; ++i) {
    auto op = src.next();
    if (!op) break;
    rep.apply(*op);
    after(*op);
  }
  return rep.stats();
}

/// Share of successful allocations whose pointer has at least `bits` bits.
inline double share_at_least(const TableStats& s, double bits) {
  if (s.successes() == 0) return 0.0;
  std::uint64_t count = 0;
  for (unsigned len = 0; len <= TinyPointer::kMaxBits; ++len)
    if (static_cast<double>(len) >= bits) count += s.pointer_bit_histogram[len];
  return static_cast<double>(count) / static_cast<double>(s.successes());
}

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

// ---------------------------------------------------------------------------
// Dereference-table trials

struct TableTrial {
  TableStats stats;
  ReplayStats replay;
  std::uint64_t slots = 0;
  unsigned width = 0;             // fixed tables: p_max
  bool uniform_width = true;      // fixed tables: every pointer exactly p_max bits
  std::uint64_t max_secondary_live = 0;
  bool stable = true;             // shadow runs: pointers still resolve to their slots
  std::vector<std::uint64_t> group_bits;  // variable tables: sampled group totals
};

/// Fixed-size table at load 1 - delta. With `shadow`, every allocation is
/// checked for slot uniqueness and ContractViolation escapes on a breach.
inline TableTrial run_fixed_trial(std::uint64_t n, double delta, const std::string& workload,
                                  std::uint64_t ops, HashSeed seed, bool shadow = false) {
  FixedTable table(n, delta, seed);
  OpSource src = OpSource::make(workload, live_cap_for(n, delta), hash::mix64(seed.value ^ 0xf1));
  TableTrial out;
  const auto track = [&](const WorkloadOp&) {
    out.max_secondary_live = std::max(out.max_secondary_live, table.secondary_live());
  };
  if (shadow) {
    ShadowVerified<FixedTable> verified(table);
    Replayer rep(verified);
    out.replay = replay(rep, src, ops, track);
    out.stable = verified.stable();
  } else {
    Replayer rep(table);
    out.replay = replay(rep, src, ops, track);
  }
  out.stats = table.stats();
  out.slots = table.slot_count();
  out.width = table.pointer_bits();
  out.uniform_width = out.stats.pointer_bit_histogram[out.width] == out.stats.successes();
  return out;
}

/// Pointer-group size ceil(log2 n / max(1, log2 1/delta)).
inline std::uint64_t group_size_for(std::uint64_t n, double delta) {
  const double lg = std::log2(static_cast<double>(n));
  return static_cast<std::uint64_t>(std::ceil(lg / std::max(1.0, std::log2(1.0 / delta)) - 1e-9));
}

/// Wrapped variable-size table at load 1 - delta. After the replay, samples
/// `groups` groups of group_size_for(n, delta) distinct live pointers and
/// records their total lengths.
inline TableTrial run_variable_trial(std::uint64_t n, double delta, const std::string& workload,
                                     std::uint64_t ops, HashSeed seed, bool use_lookup = false,
                                     std::uint64_t groups = 0, bool shadow = false) {
  WrappedVariableTable table(n, delta, seed, use_lookup);
  OpSource src = OpSource::make(workload, live_cap_for(n, delta), hash::mix64(seed.value ^ 0xf2));
  TableTrial out;
  const auto track = [&](const WorkloadOp&) {
    out.max_secondary_live = std::max(out.max_secondary_live, table.secondary_live());
  };
  const auto sample_groups = [&](const auto& rep) {
    const std::uint64_t g = group_size_for(n, delta);
    for (std::uint64_t k = 0; k < groups && src.live_count() >= g; ++k) {
      std::vector<std::uint64_t> picked;
      std::uint64_t total = 0;
      while (picked.size() < g) {
        const std::uint64_t key = *src.sample_live();
        if (std::find(picked.begin(), picked.end(), key) != picked.end()) continue;
        picked.push_back(key);
        if (auto p = rep.pointer_of(key)) total += p->length();
      }
      out.group_bits.push_back(total);
    }
  };
  if (shadow) {
    ShadowVerified<WrappedVariableTable> verified(table);
    Replayer rep(verified);
    out.replay = replay(rep, src, ops, track);
    out.stable = verified.stable();
    sample_groups(rep);
  } else {
    Replayer rep(table);
    out.replay = replay(rep, src, ops, track);
    sample_groups(rep);
  }
  out.stats = table.stats();
  out.slots = table.slot_count();
  out.width = table.nominal_pointer_bits();
  return out;
}

/// Raw variable-size table holding at most `capacity` live keys.
inline TableTrial run_raw_variable_trial(std::uint64_t capacity, const std::string& workload,
                                         std::uint64_t ops, HashSeed seed, bool use_lookup = false,
                                         bool shadow = false) {
  VariableTable table(capacity, seed, use_lookup);
  OpSource src = OpSource::make(workload, capacity, hash::mix64(seed.value ^ 0xf3));
  TableTrial out;
  const auto none = [](const WorkloadOp&) {};
  if (shadow) {
    ShadowVerified<VariableTable> verified(table);
    Replayer rep(verified);
    out.replay = replay(rep, src, ops, none);
    out.stable = verified.stable();
  } else {
    Replayer rep(table);
    out.replay = replay(rep, src, ops, none);
  }
  out.stats = table.stats();
  out.slots = table.slot_count();
  return out;
}

/// Standalone load-balancing table at load 1 - delta.
inline TableTrial run_lbt_trial(std::uint64_t m, double delta, const std::string& workload,
                                std::uint64_t ops, HashSeed seed) {
  LoadBalancingTable table(m, delta, seed);
  OpSource src = OpSource::make(workload, live_cap_for(m, delta), hash::mix64(seed.value ^ 0xf4));
  Replayer rep(table);
  TableTrial out;
  out.replay = replay(rep, src, ops, [](const WorkloadOp&) {});
  out.stats = table.stats();
  out.slots = table.slot_count();
  out.width = table.pointer_bits();
  return out;
}

// ---------------------------------------------------------------------------
// Adapter trials

struct StableDictTrial {
  std::uint64_t ops = 0;
  std::uint64_t gets = 0;
  std::uint64_t violations = 0;  // slot or value changed between insert and a get
  std::uint64_t table_slots = 0;
  double mean_pointer_bits = 0.0;  // stored pointers after the last op
  bool chunked = false;
};

inline std::uint64_t value_for(std::uint64_t key, unsigned v) noexcept {
  const std::uint64_t x = hash::mix64(key ^ 0xa5a5a5a5ULL);
  return v >= 64 ? x : x & ((std::uint64_t{1} << v) - 1);
}

/// StableDict at capacity m. Every op is followed by a get of one random live
/// key, and every delete by a get of the deleted key, each checked against
/// the slot and value recorded at insert.
inline StableDictTrial run_stable_dict_trial(std::uint64_t m, unsigned v, const std::string& workload,
                                             std::uint64_t ops, HashSeed seed) {
  StableDict dict(m, v, seed);
  OpSource src = OpSource::make(workload, m, hash::mix64(seed.value ^ 0xf5));
  absl::flat_hash_map<std::uint64_t, SlotIndex> recorded;
  StableDictTrial out;
  const auto check = [&](std::uint64_t key) {
    ++out.gets;
    auto got = dict.get(key);
    if (!got || got->second != recorded.at(key) || got->first != value_for(key, v)) ++out.violations;
  };
  for (std::uint64_t i = 0; i < ops; ++i) {
    auto op = src.next();
    if (!op) break;
    ++out.ops;
    switch (op->kind) {
      case OpKind::Allocate:
        recorded.emplace(op->key, dict.insert(op->key, value_for(op->key, v)));
        break;
      case OpKind::Free:
        check(op->key);
        dict.erase(op->key);
        recorded.erase(op->key);
        break;
      case OpKind::Dereference:
        check(op->key);
        break;
    }
    if (auto key = src.sample_live()) check(*key);
  }
  out.table_slots = dict.table().slot_count();
  out.mean_pointer_bits = dict.mean_pointer_bits();
  out.chunked = dict.chunked();
  return out;
}

struct RetrievalTrial {
  std::uint64_t ops = 0;
  std::uint64_t queries = 0;
  std::uint64_t wrong_values = 0;
  std::uint64_t max_slot = 0;
  std::uint64_t slot_universe = 0;
  double mean_retriever_bits = 0.0;  // live retrievers after the last op
};

inline RetrievalTrial run_retrieval_trial(std::uint64_t n, const std::string& workload, std::uint64_t ops,
                                          HashSeed seed) {
  RelaxedRetrieval rr(n, seed);
  OpSource src = OpSource::make(workload, n, hash::mix64(seed.value ^ 0xf6));
  absl::flat_hash_map<std::uint64_t, TinyPointer> retrievers;
  RetrievalTrial out;
  const auto check = [&](std::uint64_t key) {
    ++out.queries;
    const TinyPointer r = retrievers.at(key);
    out.max_slot = std::max(out.max_slot, rr.slot_of(key, r).value);
    if (rr.query(key, r) != value_for(key, 64)) ++out.wrong_values;
  };
  for (std::uint64_t i = 0; i < ops; ++i) {
    auto op = src.next();
    if (!op) break;
    ++out.ops;
    switch (op->kind) {
      case OpKind::Allocate:
        retrievers.emplace(op->key, rr.insert(op->key, value_for(op->key, 64)));
        check(op->key);
        break;
      case OpKind::Free: {
        check(op->key);
        auto it = retrievers.find(op->key);
        rr.erase(op->key, it->second);
        retrievers.erase(it);
        break;
      }
      case OpKind::Dereference:
        check(op->key);
        break;
    }
    if (auto key = src.sample_live()) check(*key);
  }
  out.slot_universe = rr.slot_universe();
  out.mean_retriever_bits = rr.mean_retriever_bits();
  return out;
}

// ---------------------------------------------------------------------------
// Balls-and-bins trials

struct BallsTrial {
  BinRule rule = BinRule::Single;
  std::uint64_t n = 0;
  std::uint32_t h = 0;
  unsigned d = 0;
  std::uint32_t tau = 0;
  std::uint32_t max_load = 0;         // peak over the run
  std::uint64_t exposed = 0;          // tau-exposed balls after the last op
  std::uint64_t q_max = 0;            // peak live level-two count
  std::uint64_t level3 = 0;           // level-three placements over the run
  std::uint32_t level_two_max = 0;    // peak level-two load of one bin
  std::uint64_t q_mismatches = 0;     // failed q rescans
  std::vector<double> exposed_fraction;  // per sampled tau: peak exposed / n
};

struct BallsOptions {
  std::vector<std::uint32_t> exposure_taus;
  std::uint64_t sample_every = 0;   // exposure sampling period in ops (0: end only)
  std::uint64_t rescan_every = 0;   // q rescan period in ops (0: never)
};

/// One run of `ops` workload ops against a system of n bins with ball cap h n.
inline BallsTrial run_balls_trial(BinRule rule, std::uint64_t n, std::uint32_t h, unsigned d,
                                  const std::string& workload, std::uint64_t ops, HashSeed seed,
                                  const BallsOptions& opt = {}) {
  BinSystem sys(n, h, d, rule, seed);
  OpSource src = OpSource::make(workload, static_cast<std::uint64_t>(h) * sys.bins(),
                                hash::mix64(seed.value ^ 0xf7));
  BallsTrial out;
  out.exposed_fraction.assign(opt.exposure_taus.size(), 0.0);
  const auto sample = [&] {
    for (std::size_t k = 0; k < opt.exposure_taus.size(); ++k)
      out.exposed_fraction[k] = std::max(
          out.exposed_fraction[k],
          static_cast<double>(sys.exposed_count(opt.exposure_taus[k])) / static_cast<double>(sys.bins()));
  };
  for (std::uint64_t i = 1; i <= ops; ++i) {
    auto op = src.next();
    if (!op) break;
    if (op->kind == OpKind::Allocate) sys.insert(op->key);
    if (op->kind == OpKind::Free) sys.erase(op->key);
    if (opt.sample_every && i % opt.sample_every == 0) sample();
    if (opt.rescan_every && i % opt.rescan_every == 0 && sys.recount_level_two() != sys.level_two_count())
      ++out.q_mismatches;
  }
  sample();
  out.rule = rule;
  out.n = sys.bins();
  out.h = h;
  out.d = sys.d();
  out.tau = sys.tau();
  out.max_load = sys.peak_load();
  out.exposed = sys.exposed_count(sys.tau());
  out.q_max = sys.peak_level_two_count();
  out.level3 = sys.level_three_inserts();
  out.level_two_max = sys.peak_level_two_load();
  return out;
}

/// Iceberg max-load acceptance bound h + tau + ceil(log2 log2 n / (d log2 phi_d)) + 4.
inline double iceberg_load_bound(std::uint64_t n, std::uint32_t h, unsigned d, std::uint32_t tau) {
  return static_cast<double>(h) + tau + std::ceil(dleft_term(n, d) - 1e-12) + 4.0;
}

/// Exposed-fraction envelope 64 h^3 e^(-tau^2 / 3h).
inline double exposure_envelope(std::uint32_t h, std::uint32_t tau) {
  const double hd = static_cast<double>(h);
  return 64.0 * hd * hd * hd * std::exp(-static_cast<double>(tau) * tau / (3.0 * hd));
}

// ---------------------------------------------------------------------------
// Probe complexity

struct ProbeTrial {
  double delta = 0.0;
  double mean = 0.0;
  double p99 = 0.0;
  double max = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t failures = 0;
};

/// Wrapped variable-size table at load 1 - delta under churn. The probe index
/// of a ball is the position of its pointer in the length-then-value order of
/// bit strings; it is sampled for random live balls at 16 instants after the
/// table first fills.
inline ProbeTrial run_probe_trial(std::uint64_t n, double delta, std::uint64_t ops, HashSeed seed,
                                  std::uint64_t per_instant = 256) {
  WrappedVariableTable table(n, delta, seed);
  const std::uint64_t cap = live_cap_for(n, delta);
  OpSource src = OpSource::make("churn", cap, hash::mix64(seed.value ^ 0xf8));
  Replayer rep(table);
  const std::uint64_t tail = ops > cap ? ops - cap : 0;
  const std::uint64_t period = std::max<std::uint64_t>(1, tail / 16);
  std::vector<double> probes;
  for (std::uint64_t i = 1; i <= ops; ++i) {
    auto op = src.next();
    if (!op) break;
    rep.apply(*op);
    if (i >= cap && (i - cap) % period == 0) {
      for (std::uint64_t k = 0; k < per_instant; ++k) {
        auto key = src.sample_live();
        if (!key) break;
        if (auto p = rep.pointer_of(*key)) probes.push_back(static_cast<double>(pointer_to_index(*p)));
      }
    }
  }
  ProbeTrial out;
  out.delta = delta;
  out.samples = probes.size();
  out.failures = rep.stats().failures;
  if (!probes.empty()) {
    out.mean = std::accumulate(probes.begin(), probes.end(), 0.0) / static_cast<double>(probes.size());
    out.max = *std::max_element(probes.begin(), probes.end());
    out.p99 = percentile(std::move(probes), 0.99);
  }
  return out;
}

/// Least-squares slope of ys against xs.
inline double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const auto k = static_cast<double>(xs.size());
  if (xs.size() < 2) return 0.0;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / k;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / k;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return den == 0.0 ? 0.0 : num / den;
}

}  // namespace tinyptr
