#include <gtest/gtest.h>

#include <absl/container/flat_hash_set.h>

#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tinyptr/core.hpp"
#include "tinyptr/fixed.hpp"
#include "tinyptr/lbt.hpp"
#include "tinyptr/shadow.hpp"
#include "tinyptr/variable.hpp"
#include "tinyptr/workload.hpp"

using namespace tinyptr;

// ---------------------------------------------------------------------------
// TinyPointer

TEST(TinyPointer, StringRoundTrip) {
  for (const char* s : {"", "0", "1", "00101", "1111000011110000", "0000000001"}) {
    const auto p = TinyPointer::from_string(s);
    EXPECT_EQ(p.to_string(), s);
    EXPECT_EQ(p.length(), std::string(s).size());
  }
  EXPECT_THROW(TinyPointer::from_string("012"), InvalidParams);
  EXPECT_THROW(TinyPointer::from_string(std::string(65, '1')), InvalidParams);
}

TEST(TinyPointer, EqualityIsOnLengthAndBits) {
  EXPECT_NE(TinyPointer::from_string("01"), TinyPointer::from_string("1"));
  EXPECT_NE(TinyPointer::from_string(""), TinyPointer::from_string("0"));
  EXPECT_EQ(TinyPointer(5, 3), TinyPointer::from_string("101"));
  EXPECT_EQ(TinyPointer(0xFF, 3), TinyPointer::from_string("111"));  // high bits dropped
}

TEST(TinyPointer, BitAccessAndRead) {
  const auto p = TinyPointer::from_string("1011001");
  EXPECT_TRUE(p.bit(0));
  EXPECT_FALSE(p.bit(1));
  EXPECT_EQ(p.read(0, 3), 0b101U);
  EXPECT_EQ(p.read(3, 4), 0b1001U);
  EXPECT_EQ(p.read(5, 4), 0b0100U);  // past the end reads as zero
  EXPECT_EQ(p.read(2, 0), 0U);
}

TEST(TinyPointer, AppendDropPad) {
  const auto a = TinyPointer::from_string("10");
  const auto b = TinyPointer::from_string("011");
  EXPECT_EQ(a.append(b).to_string(), "10011");
  EXPECT_EQ(a.append(TinyPointer{}).to_string(), "10");
  EXPECT_EQ(TinyPointer{}.append(b).to_string(), "011");
  EXPECT_EQ(a.append_bits(1, 4).to_string(), "100001");
  EXPECT_EQ(a.append(b).drop_front(2).to_string(), "011");
  EXPECT_EQ(a.drop_front(5).to_string(), "");
  EXPECT_EQ(a.padded_to(6).to_string(), "100000");
  EXPECT_EQ(a.padded_to(1).to_string(), "10");
  const auto full = TinyPointer(~0ULL, 32).append(TinyPointer(0, 32));
  EXPECT_EQ(full.length(), 64U);
  EXPECT_EQ(full.bits(), 0xFFFFFFFF00000000ULL);
}

// Enumeration oracle: list all strings by length, then lexicographically.
TEST(PointerIndex, BijectionMatchesEnumeration) {
  std::uint64_t index = 0;
  for (unsigned len = 0; len <= 12; ++len) {
    for (std::uint64_t v = 0; v < (std::uint64_t{1} << len); ++v, ++index) {
      const TinyPointer p(v, len);
      EXPECT_EQ(pointer_to_index(p), index);
      EXPECT_EQ(pointer_from_index(index), p);
    }
  }
  EXPECT_EQ(pointer_to_index(TinyPointer::from_string("0")), 1U);
  EXPECT_EQ(pointer_to_index(TinyPointer::from_string("")), 0U);
}

TEST(TableStats, Bookkeeping) {
  TableStats s;
  s.record_success(TinyPointer(0, 3));
  s.record_success(TinyPointer(0, 5));
  s.record_failure();
  s.record_free();
  EXPECT_EQ(s.allocations, 3U);
  EXPECT_EQ(s.live(), 1U);
  EXPECT_EQ(s.successes(), 2U);
  EXPECT_DOUBLE_EQ(s.mean_pointer_bits(), 4.0);
  std::uint64_t hist = 0;
  for (auto c : s.pointer_bit_histogram) hist += c;
  EXPECT_EQ(hist, s.allocations - s.failures);
}

// ---------------------------------------------------------------------------
// Workload records

TEST(Workload, FileRoundTrip) {
  const auto ops = generate_workload(WorkloadKind::Reinsert, 50, 400, 9);
  std::stringstream ss;
  write_workload(ss, ops);
  EXPECT_EQ(read_workload(ss), ops);
}

TEST(Workload, ParsesAllRecordKinds) {
  std::stringstream ss("A 1\nD 1\r\n\nF 18446744073709551615\n");
  const auto ops = read_workload(ss);
  ASSERT_EQ(ops.size(), 3U);
  EXPECT_EQ(ops[1].kind, OpKind::Dereference);
  EXPECT_EQ(ops[2].key, ~0ULL);
}

TEST(Workload, RejectsMalformedLines) {
  for (const char* bad : {"X 1\n", "A\n", "A 12a\n", "A  1\n", "F 18446744073709551616\n", "A1\n"}) {
    std::stringstream ss(bad);
    EXPECT_THROW(read_workload(ss), InvalidParams) << bad;
  }
  std::stringstream ss("A 1\nA 2\nB 3\n");
  try {
    read_workload(ss);
    FAIL();
  } catch (const InvalidParams& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Workload, GeneratorsRespectDiscipline) {
  for (auto kind : {WorkloadKind::Churn, WorkloadKind::Fifo, WorkloadKind::Reinsert}) {
    const auto ops = generate_workload(kind, 1000, 50000, 3);
    EXPECT_FALSE(find_workload_violation(ops, 1000).has_value()) << to_string(kind);
    EXPECT_TRUE(find_workload_violation(ops, 999).has_value());
  }
}

TEST(Workload, ViolationDetector) {
  EXPECT_EQ(find_workload_violation({{OpKind::Allocate, 1}, {OpKind::Allocate, 1}}, 5), 1U);
  EXPECT_EQ(find_workload_violation({{OpKind::Free, 1}}, 5), 0U);
  EXPECT_EQ(find_workload_violation({{OpKind::Allocate, 1}, {OpKind::Free, 1}, {OpKind::Dereference, 1}}, 5), 2U);
}

TEST(Workload, FifoFreesOldestFirst) {
  const auto ops = generate_workload(WorkloadKind::Fifo, 4, 12, 1);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(ops[i].kind, OpKind::Allocate);
  EXPECT_EQ(ops[4].kind, OpKind::Free);
  EXPECT_EQ(ops[4].key, ops[0].key);
  EXPECT_EQ(ops[6].key, ops[1].key);
}

TEST(Workload, ReinsertCyclesAFixedUniverse) {
  const auto ops = generate_workload(WorkloadKind::Reinsert, 160, 20000, 5);
  absl::flat_hash_set<std::uint64_t> keys;
  for (const auto& op : ops) keys.insert(op.key);
  EXPECT_EQ(keys.size(), 170U);  // cap + cap / 16
}

TEST(Workload, Deterministic) {
  EXPECT_EQ(generate_workload(WorkloadKind::Churn, 100, 1000, 8), generate_workload(WorkloadKind::Churn, 100, 1000, 8));
  EXPECT_NE(generate_workload(WorkloadKind::Churn, 100, 1000, 8), generate_workload(WorkloadKind::Churn, 100, 1000, 9));
}

// ---------------------------------------------------------------------------
// Contract tests shared by every table

namespace {

struct LbtCase {
  using Table = LoadBalancingTable;
  static constexpr double kDelta = 0.25;
  static Table make(std::uint64_t n, HashSeed s) { return Table(n, kDelta, s); }
  static auto snapshot(const Table& t) { return t.occupancy(); }
  static std::uint64_t live_cap(std::uint64_t n) { return n / 2; }
};

struct TwoChoiceCase {
  using Table = TwoChoiceTable;
  static Table make(std::uint64_t n, HashSeed s) { return Table(n, s); }
  static auto snapshot(const Table& t) { return t.occupancy(); }
  static std::uint64_t live_cap(std::uint64_t n) { return n / 2; }
};

struct FixedCase {
  using Table = FixedTable;
  static Table make(std::uint64_t n, HashSeed s) { return Table(n, 0.125, s); }
  static auto snapshot(const Table& t) { return std::pair(t.primary().occupancy(), t.secondary().occupancy()); }
  static std::uint64_t live_cap(std::uint64_t n) { return n * 7 / 8; }
};

struct VariableCase {
  using Table = VariableTable;
  static Table make(std::uint64_t n, HashSeed s) { return Table(n, s); }
  static Table snapshot(const Table& t) { return t; }
  static std::uint64_t live_cap(std::uint64_t n) { return n; }
};

struct VariableLookupCase {
  using Table = VariableTable;
  static Table make(std::uint64_t n, HashSeed s) { return Table(n, s, true); }
  static Table snapshot(const Table& t) { return t; }
  static std::uint64_t live_cap(std::uint64_t n) { return n; }
};

struct WrappedCase {
  using Table = WrappedVariableTable;
  static Table make(std::uint64_t n, HashSeed s) { return Table(n, 0.25, s); }
  static auto snapshot(const Table& t) { return std::pair(t.primary().occupancy(), t.secondary()); }
  static std::uint64_t live_cap(std::uint64_t n) { return n * 3 / 4; }
};

template <class Case>
class Contract : public ::testing::Test {};

using Cases = ::testing::Types<LbtCase, TwoChoiceCase, FixedCase, VariableCase, VariableLookupCase, WrappedCase>;
TYPED_TEST_SUITE(Contract, Cases);

constexpr std::uint64_t kN = 4096;

}  // namespace

TYPED_TEST(Contract, FirstAllocationSucceeds) {
  auto t = TypeParam::make(kN, HashSeed{1});
  EXPECT_TRUE(t.allocate(123).has_value());
  EXPECT_EQ(t.stats().live(), 1U);
}

TYPED_TEST(Contract, TwoKeysGetDistinctSlots) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto t = TypeParam::make(kN, HashSeed{seed});
    const auto p1 = t.allocate(1);
    const auto p2 = t.allocate(2);
    ASSERT_TRUE(p1 && p2);
    EXPECT_NE(t.dereference(1, *p1), t.dereference(2, *p2));
  }
}

TYPED_TEST(Contract, DereferenceIsDeterministic) {
  auto t = TypeParam::make(kN, HashSeed{2});
  const auto p = t.allocate(77);
  ASSERT_TRUE(p);
  EXPECT_EQ(t.dereference(77, *p), t.dereference(77, *p));
  EXPECT_TRUE(t.occupied(t.dereference(77, *p)));
}

TYPED_TEST(Contract, FuzzedDereferenceStaysInRange) {
  auto t = TypeParam::make(kN, HashSeed{3});
  SplitMix64 rng(4);
  for (int i = 0; i < 2000; ++i) (void)t.allocate(rng());
  for (int i = 0; i < 1000000; ++i) {
    const std::uint64_t key = rng();
    const auto len = static_cast<unsigned>(rng.below(65));
    const TinyPointer p(rng(), len);
    ASSERT_LT(t.dereference(key, p).value, t.slot_count()) << p;
  }
}

TYPED_TEST(Contract, FreeThenReallocate) {
  auto t = TypeParam::make(kN, HashSeed{5});
  auto p = t.allocate(9);
  ASSERT_TRUE(p);
  t.free(9, *p);
  EXPECT_EQ(t.stats().live(), 0U);
  EXPECT_TRUE(t.allocate(9).has_value());
  EXPECT_EQ(t.stats().live(), 1U);
}

TYPED_TEST(Contract, FullCycleLeavesEverySlotFree) {
  auto t = TypeParam::make(kN, HashSeed{6});
  SplitMix64 rng(7);
  for (int i = 0; i < 100000; ++i) {
    const std::uint64_t key = rng();
    if (auto p = t.allocate(key)) t.free(key, *p);
  }
  EXPECT_EQ(t.stats().live(), 0U);
  for (std::uint64_t s = 0; s < t.slot_count(); ++s) ASSERT_FALSE(t.occupied(SlotIndex{s})) << s;
}

TYPED_TEST(Contract, DereferenceIsPure) {
  auto t = TypeParam::make(kN, HashSeed{8});
  SplitMix64 rng(9);
  for (std::uint64_t i = 0; i < TypeParam::live_cap(kN) / 2; ++i) (void)t.allocate(rng());
  const auto before = TypeParam::snapshot(t);
  const auto stats_before = t.stats().allocations;
  for (int i = 0; i < 10000; ++i) (void)t.dereference(rng(), TinyPointer(rng(), static_cast<unsigned>(rng.below(40))));
  EXPECT_TRUE(TypeParam::snapshot(t) == before);
  EXPECT_EQ(t.stats().allocations, stats_before);
}

TYPED_TEST(Contract, UniqueAndStableUnderWorkloads) {
  for (auto kind : {WorkloadKind::Churn, WorkloadKind::Fifo, WorkloadKind::Reinsert}) {
    auto t = TypeParam::make(kN, HashSeed{10});
    ShadowVerified verified(t);
    Replayer rep(verified);
    WorkloadGenerator gen(kind, TypeParam::live_cap(kN), 11);
    for (int i = 0; i < 100000; ++i) {
      rep.apply(gen.next());
      if (i % 10000 == 0) {
        ASSERT_TRUE(verified.stable());
      }
    }
    EXPECT_TRUE(verified.stable()) << to_string(kind);
    EXPECT_EQ(verified.live() + rep.stats().failed_alive, gen.live_count());
  }
}

// ---------------------------------------------------------------------------
// Creation

TEST(Create, CapacityAndEmptiness) {
  FixedTable t(1024, 0.25, HashSeed{1});
  EXPECT_EQ(t.slot_count(), 1024U);
  EXPECT_EQ(t.stats().live(), 0U);
  WrappedVariableTable w(1024, 0.25, HashSeed{1});
  EXPECT_EQ(w.slot_count(), 1024U);
}

TEST(Create, RejectsDegenerateParameters) {
  EXPECT_THROW(FixedTable(0, 0.25, HashSeed{}), InvalidParams);
  EXPECT_THROW(FixedTable(15, 0.25, HashSeed{}), InvalidParams);
  EXPECT_THROW(FixedTable(1024, 0.0, HashSeed{}), InvalidParams);
  EXPECT_THROW(FixedTable(1024, 1.0, HashSeed{}), InvalidParams);
  EXPECT_THROW(LoadBalancingTable(7, 0.5, HashSeed{}), InvalidParams);
  EXPECT_THROW(LoadBalancingTable(64, -0.1, HashSeed{}), InvalidParams);
  EXPECT_THROW(VariableTable(0, HashSeed{}), InvalidParams);
  EXPECT_THROW(WrappedVariableTable(0, 0.5, HashSeed{}), InvalidParams);
  EXPECT_THROW(WrappedVariableTable(1024, 1.5, HashSeed{}), InvalidParams);
}

// Metadata stays within kMetadataBitsPerSlot bits per slot.
TEST(Create, MetadataIsLinear) {
  const std::uint64_t n = 1U << 16;
  const auto limit = static_cast<std::uint64_t>(kMetadataBitsPerSlot * n);
  EXPECT_LE(FixedTable(n, 0.125, HashSeed{}).metadata_bits(), limit);
  EXPECT_LE(LoadBalancingTable(n, 0.125, HashSeed{}).metadata_bits(), limit);
  EXPECT_LE(WrappedVariableTable(n, 0.125, HashSeed{}).metadata_bits(), limit);
  VariableTable v(n, HashSeed{});
  EXPECT_LE(v.metadata_bits(), static_cast<std::uint64_t>(kMetadataBitsPerSlot * v.slot_count()));
  for (double delta : {0.5, 0.25, 1.0 / 32})
    for (std::uint64_t size : {1ULL << 12, 1ULL << 20})
      EXPECT_LE(FixedTable(size, delta, HashSeed{}).metadata_bits(),
                static_cast<std::uint64_t>(kMetadataBitsPerSlot * size))
          << size << " " << delta;
}

TEST(Create, FreshFixedTableTakesFullLoad) {
  const std::uint64_t n = 1U << 16;
  FixedTable t(n, 0.25, HashSeed{0xDEAD});
  for (std::uint64_t k = 0; k < n * 3 / 4; ++k) ASSERT_TRUE(t.allocate(hash::mix64(k)).has_value()) << k;
  EXPECT_EQ(t.stats().failures, 0U);
}

// ---------------------------------------------------------------------------
// Shadow verification

TEST(Shadow, RejectsContractBreaches) {
  FixedTable t(256, 0.25, HashSeed{1});
  ShadowVerified verified(t);
  const auto p = verified.allocate(5);
  ASSERT_TRUE(p);
  EXPECT_THROW((void)verified.allocate(5), ContractViolation);
  EXPECT_THROW(verified.free(6, *p), ContractViolation);
  const auto q = verified.allocate(7);
  ASSERT_TRUE(q);
  if (!(*q == *p)) {
    EXPECT_THROW(verified.free(5, *q), ContractViolation);
  }
  verified.free(5, *p);
  EXPECT_THROW(verified.free(5, *p), ContractViolation);
  EXPECT_EQ(verified.live(), 1U);
  EXPECT_EQ(verified.slot_of(7), t.dereference(7, *q));
}

namespace {

// A table that hands every key slot 0, to show the shadow catches duplicates.
struct BrokenTable {
  std::optional<TinyPointer> allocate(std::uint64_t) {
    stats_.record_success(TinyPointer(0, 1));
    return TinyPointer(0, 1);
  }
  SlotIndex dereference(std::uint64_t, TinyPointer) const { return SlotIndex{0}; }
  void free(std::uint64_t, TinyPointer) { stats_.record_free(); }
  std::uint64_t slot_count() const { return 4; }
  const TableStats& stats() const { return stats_; }
  std::uint64_t metadata_bits() const { return 0; }
  TableStats stats_;
};

}  // namespace

TEST(Shadow, CatchesDuplicateSlots) {
  BrokenTable broken;
  ShadowVerified verified(broken);
  ASSERT_TRUE(verified.allocate(1));
  EXPECT_THROW((void)verified.allocate(2), ContractViolation);
}

TEST(Replayer, FailedAllocationsDropTheirFrees) {
  struct AlwaysFail {
    std::optional<TinyPointer> allocate(std::uint64_t) {
      stats_.record_failure();
      return std::nullopt;
    }
    SlotIndex dereference(std::uint64_t, TinyPointer) const { return SlotIndex{0}; }
    void free(std::uint64_t, TinyPointer) { ADD_FAILURE() << "free reached the table"; }
    std::uint64_t slot_count() const { return 1; }
    const TableStats& stats() const { return stats_; }
    std::uint64_t metadata_bits() const { return 0; }
    TableStats stats_;
  } table;
  Replayer rep(table);
  rep.apply({OpKind::Allocate, 1});
  rep.apply({OpKind::Allocate, 2});
  EXPECT_EQ(rep.stats().max_failed_alive, 2U);
  rep.apply({OpKind::Free, 1});
  rep.apply({OpKind::Dereference, 2});
  EXPECT_EQ(rep.stats().skipped_frees, 1U);
  EXPECT_EQ(rep.stats().failed_alive, 1U);
  EXPECT_FALSE(rep.pointer_of(2).has_value());
  EXPECT_THROW(rep.apply({OpKind::Free, 1}), ContractViolation);
}
