#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "tinyptr/ballsbins.hpp"
#include "tinyptr/hashing.hpp"

using namespace tinyptr;

namespace {

// Churn against a BinSystem: fill to `live`, then alternate a random delete
// with a fresh insert. `check` sees every insert before it happens.
template <class Check>
void churn(BinSystem& sys, std::uint64_t live, int ops, std::uint64_t seed, Check&& check) {
  SplitMix64 rng(seed);
  std::vector<std::uint64_t> keys;
  for (int i = 0; i < ops; ++i) {
    if (keys.size() < live) {
      const std::uint64_t x = rng();
      check(x);
      keys.push_back(x);
    } else {
      const std::size_t j = static_cast<std::size_t>(rng.below(keys.size()));
      sys.erase(keys[j]);
      keys[j] = keys.back();
      keys.pop_back();
    }
  }
}

}  // namespace

TEST(BallsBins, RuleNames) {
  for (auto r : {BinRule::Single, BinRule::DLeft, BinRule::Iceberg}) EXPECT_EQ(parse_bin_rule(to_string(r)), r);
  EXPECT_FALSE(parse_bin_rule("two").has_value());
}

TEST(BallsBins, GeneralizedGoldenRatio) {
  EXPECT_NEAR(generalized_golden_ratio(2), (1 + std::sqrt(5.0)) / 2, 1e-12);
  EXPECT_NEAR(generalized_golden_ratio(3), 1.839286755214161, 1e-12);  // tribonacci constant
  double prev = 1.0;
  for (unsigned d = 2; d <= 8; ++d) {
    const double phi = generalized_golden_ratio(d);
    EXPECT_GT(phi, prev);
    EXPECT_LT(phi, 2.0);
    double lhs = std::pow(phi, d);
    double rhs = 0;
    for (unsigned k = 0; k < d; ++k) rhs += std::pow(phi, k);
    EXPECT_NEAR(lhs, rhs, 1e-9);
    prev = phi;
  }
}

TEST(BallsBins, Terms) {
  EXPECT_NEAR(dleft_term(1U << 16, 2), 4.0 / (2 * std::log2((1 + std::sqrt(5.0)) / 2)), 1e-9);
  EXPECT_EQ(iceberg_tau(2, 2), 5U);  // ceil(2 sqrt(2 log2 6))
  EXPECT_EQ(iceberg_tau(1, 2), 3U);  // ceil(2 sqrt(2))
  EXPECT_EQ(BinSystem::rounded_bins(10, 3), 12U);
  EXPECT_EQ(BinSystem::rounded_bins(12, 3), 12U);
}

TEST(BallsBins, InvalidParams) {
  EXPECT_THROW(BinSystem(0, 1, 2, BinRule::Single, HashSeed{}), InvalidParams);
  EXPECT_THROW(BinSystem(16, 0, 2, BinRule::Single, HashSeed{}), InvalidParams);
  EXPECT_THROW(BinSystem(16, 1, 1, BinRule::Iceberg, HashSeed{}), InvalidParams);
  BinSystem sys(16, 1, 2, BinRule::DLeft, HashSeed{});
  sys.insert(1);
  EXPECT_THROW(sys.insert(1), ContractViolation);
  EXPECT_THROW(sys.erase(2), ContractViolation);
}

TEST(BallsBins, EmptySystem) {
  BinSystem sys(64, 2, 2, BinRule::Iceberg, HashSeed{1});
  EXPECT_EQ(sys.max_load(), 0U);
  EXPECT_EQ(sys.balls(), 0U);
  EXPECT_EQ(sys.exposed_count(0), 0U);
  EXPECT_EQ(sys.level_two_count(), 0U);
}

TEST(BallsBins, SingleBinTakesEverything) {
  BinSystem sys(1, 1, 1, BinRule::Single, HashSeed{2});
  for (std::uint64_t x = 0; x < 50; ++x) EXPECT_EQ(sys.insert(x).bin, 0U);
  EXPECT_EQ(sys.max_load(), 50U);
  EXPECT_EQ(sys.exposed_count(0), 49U);  // preload >= h = 1
  EXPECT_EQ(sys.exposed_count(10), 39U);  // preloads 11..49
}

TEST(BallsBins, SingleRuleUsesItsHash) {
  BinSystem sys(1000, 1, 1, BinRule::Single, HashSeed{3});
  for (std::uint64_t x = 0; x < 2000; ++x) {
    const auto before = sys.load(sys.single_bin(x));
    const Placement at = sys.insert(x);
    EXPECT_EQ(at.bin, sys.single_bin(x));
    EXPECT_EQ(at.preload, before);
  }
  EXPECT_EQ(sys.balls(), 2000U);
}

TEST(BallsBins, SingleMaxLoadBaseline) {
  // n balls in n bins: the maximum load concentrates near ln n / ln ln n.
  const std::uint64_t n = 1U << 14;
  BinSystem sys(n, 1, 1, BinRule::Single, HashSeed{4});
  for (std::uint64_t x = 0; x < n; ++x) sys.insert(hash::mix64(x));
  const double scale = std::log(static_cast<double>(n)) / std::log(std::log(static_cast<double>(n)));
  EXPECT_GE(sys.max_load(), 4U);
  EXPECT_LE(static_cast<double>(sys.max_load()), 3 * scale);
}

TEST(BallsBins, DLeftChoicesStayInGroups) {
  BinSystem sys(90, 1, 3, BinRule::DLeft, HashSeed{5});
  ASSERT_EQ(sys.bins(), 90U);
  for (std::uint64_t x = 0; x < 10000; ++x)
    for (unsigned i = 0; i < 3; ++i) {
      const auto b = sys.choice_bin(x, i);
      ASSERT_GE(b, 30U * i);
      ASSERT_LT(b, 30U * (i + 1));
    }
}

TEST(BallsBins, DLeftTiesGoLeft) {
  BinSystem sys(1024, 1, 4, BinRule::DLeft, HashSeed{6});
  EXPECT_EQ(sys.insert(77).bin, sys.choice_bin(77, 0));
}

// Every insert goes to the least loaded candidate, the first one among equals.
TEST(BallsBins, DLeftMatchesOracle) {
  for (unsigned d : {2U, 3U, 4U}) {
    BinSystem sys(1U << 10, 2, d, BinRule::DLeft, HashSeed{d});
    churn(sys, 2U << 10, 100000, d, [&](std::uint64_t x) {
      std::uint64_t best = sys.choice_bin(x, 0);
      for (unsigned i = 1; i < d; ++i)
        if (sys.load(sys.choice_bin(x, i)) < sys.load(best)) best = sys.choice_bin(x, i);
      ASSERT_EQ(sys.insert(x).bin, best);
    });
  }
}

TEST(BallsBins, IcebergMatchesOracle) {
  for (unsigned d : {2U, 3U}) {
    for (std::uint32_t h : {1U, 4U}) {
      BinSystem sys(512, h, d, BinRule::Iceberg, HashSeed{h * 10 + d});
      const std::uint64_t cap = sys.level_two_cap();
      EXPECT_EQ(cap, (sys.bins() + d - 1) / d);
      churn(sys, h * sys.bins(), 100000, h + d, [&](std::uint64_t x) {
        const std::uint64_t g = sys.single_bin(x);
        Placement expected;
        if (sys.level_one_load(g) <= h + sys.tau()) {
          expected = {static_cast<std::uint32_t>(g), 1, sys.load(g)};
        } else if (sys.level_two_count() < cap) {
          std::uint64_t best = sys.choice_bin(x, 0);
          for (unsigned i = 1; i < d; ++i)
            if (sys.level_two_load(sys.choice_bin(x, i)) < sys.level_two_load(best)) best = sys.choice_bin(x, i);
          expected = {static_cast<std::uint32_t>(best), 2, sys.load(best)};
        } else {
          expected = {0, 3, sys.load(0)};
        }
        ASSERT_EQ(sys.insert(x), expected);
        ASSERT_LE(sys.level_one_load(g), h + sys.tau() + 1);
      });
      EXPECT_EQ(sys.recount_level_two(), sys.level_two_count());
    }
  }
}

// Forcing level two and level three with an explicit tau of zero.
TEST(BallsBins, IcebergOverflowLevels) {
  BinSystem sys(4, 1, 2, BinRule::Iceberg, HashSeed{7}, 0);
  ASSERT_EQ(sys.level_two_cap(), 2U);
  std::map<std::uint8_t, int> levels;
  for (std::uint64_t x = 0; x < 200; ++x) ++levels[sys.insert(x).level];
  EXPECT_EQ(levels[1], 8);  // each bin accepts up to h + tau + 1 = 2
  EXPECT_EQ(levels[2], 2);
  EXPECT_EQ(levels[3], 190);
  EXPECT_EQ(sys.level_three_count(), 190U);
  EXPECT_EQ(sys.load(0) - sys.level_one_load(0) - sys.level_two_load(0), 190U);
}

TEST(BallsBins, NoBallEverMoves) {
  BinSystem sys(256, 2, 2, BinRule::Iceberg, HashSeed{8});
  std::map<std::uint64_t, Placement> first;
  churn(sys, 512, 50000, 9, [&](std::uint64_t x) { first[x] = sys.insert(x); });
  std::uint64_t live = 0;
  for (const auto& [x, at] : first) {
    if (auto now = sys.placement_of(x)) {
      EXPECT_EQ(*now, at);
      ++live;
    }
  }
  EXPECT_EQ(live, sys.balls());
}

TEST(BallsBins, ExposedCountMatchesPlacements) {
  BinSystem sys(128, 2, 2, BinRule::Single, HashSeed{10});
  std::map<std::uint64_t, Placement> placed;
  SplitMix64 rng(11);
  std::vector<std::uint64_t> keys;
  for (int i = 0; i < 5000; ++i) {
    if (keys.size() < 400 || rng.below(2)) {
      const std::uint64_t x = rng();
      placed[x] = sys.insert(x);
      keys.push_back(x);
    } else {
      const std::size_t j = static_cast<std::size_t>(rng.below(keys.size()));
      sys.erase(keys[j]);
      placed.erase(keys[j]);
      keys[j] = keys.back();
      keys.pop_back();
    }
  }
  for (std::uint32_t tau = 0; tau < 10; ++tau) {
    std::uint64_t expected = 0;
    for (const auto& [x, at] : placed) expected += at.preload >= 2 + tau;
    EXPECT_EQ(sys.exposed_count(tau), expected) << tau;
  }
}

TEST(BallsBins, PeaksTrackHistory) {
  BinSystem sys(64, 1, 1, BinRule::Single, HashSeed{12});
  std::vector<std::uint64_t> xs;
  for (std::uint64_t x = 0; x < 200; ++x) {
    sys.insert(x);
    xs.push_back(x);
  }
  const auto peak = sys.max_load();
  EXPECT_EQ(sys.peak_load(), peak);
  for (auto x : xs) sys.erase(x);
  EXPECT_EQ(sys.max_load(), 0U);
  EXPECT_EQ(sys.peak_load(), peak);
}
