#pragma once

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "tinyptr/check.hpp"
#include "tinyptr/core.hpp"
#include "tinyptr/hashing.hpp"

namespace tinyptr {

enum class BinRule : std::uint8_t { Single, DLeft, Iceberg };

inline std::string_view to_string(BinRule r) {
  switch (r) {
    case BinRule::Single: return "single";
    case BinRule::DLeft: return "dleft";
    case BinRule::Iceberg: return "iceberg";
  }
  return "?";
}

inline std::optional<BinRule> parse_bin_rule(std::string_view s) {
  if (s == "single") return BinRule::Single;
  if (s == "dleft") return BinRule::DLeft;
  if (s == "iceberg") return BinRule::Iceberg;
  return std::nullopt;
}

/// Root in (1, 2] of x^d = x^(d-1) + ... + x + 1 (phi_2 is the golden ratio).
inline double generalized_golden_ratio(unsigned d) {
  if (d < 2) return 1.0;
  const auto excess = [d](double x) {
    double lhs = 1.0;
    double rhs = 0.0;
    for (unsigned k = 0; k < d; ++k) {
      rhs += lhs;
      lhs *= x;
    }
    return lhs - rhs;
  };
  double lo = 1.0;
  double hi = 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// log2 log2 n / (d log2 phi_d), the d-left term of the max-load bounds.
inline double dleft_term(std::uint64_t n, unsigned d) {
  return std::log2(std::log2(static_cast<double>(n))) /
         (static_cast<double>(d) * std::log2(generalized_golden_ratio(d)));
}

/// Level-one threshold slack for Iceberg: ceil(c * sqrt(h * log2(h d + 2))).
inline std::uint32_t iceberg_tau(std::uint32_t h, unsigned d, double c = 2.0) {
  const double hd = static_cast<double>(h) * static_cast<double>(d);
  return static_cast<std::uint32_t>(
      std::ceil(c * std::sqrt(static_cast<double>(h) * std::log2(hd + 2.0)) - 1e-12));
}

struct Placement {
  std::uint32_t bin = 0;
  std::uint8_t level = 1;      // 1, 2 or 3 for Iceberg; 1 otherwise
  std::uint32_t preload = 0;   // balls already in the bin when this one arrived

  friend constexpr bool operator==(const Placement&, const Placement&) = default;
};

/// Dynamic balls-and-bins state under one placement rule. Balls never move
/// between insert and delete.
///
///  Single   bin g(x).
///  DLeft    bins split into d equal groups; h_i(x) is uniform in group i; the
///           least loaded candidate wins, ties to the smallest i.
///  Iceberg  level one in g(x) while g(x) holds <= h + tau level-one balls;
///           otherwise level two (least level-two-loaded h_i(x), ties to the
///           smallest i) while q < ceil(n / d); otherwise level three in bin 0.
class BinSystem {
 public:
  static constexpr std::uint32_t kPreloadBuckets = 1024;

  BinSystem(std::uint64_t n, std::uint32_t h, unsigned d, BinRule rule, HashSeed seed,
            std::optional<std::uint32_t> tau = std::nullopt)
      : rule_(rule),
        d_(rule == BinRule::Single ? 1 : d),
        n_(rounded_bins(n, rule == BinRule::Single ? 1 : d)),
        h_(h),
        tau_(tau.value_or(iceberg_tau(h, std::max(1U, d)))),
        group_(n_ / d_),
        level_two_cap_((n_ + d_ - 1) / d_),
        g_seed_(derive_seed(seed, 0)),
        choice_seed_(derive_seed(seed, 1)),
        load_(n_, 0),
        level_one_(rule == BinRule::Iceberg ? n_ : 0, 0),
        level_two_(rule == BinRule::Iceberg ? n_ : 0, 0),
        preload_hist_(kPreloadBuckets, 0) {
    if (h == 0) throw InvalidParams("h must be at least 1");
    if (rule != BinRule::Single && d < 1) throw InvalidParams("d must be at least 1");
    if (rule == BinRule::Iceberg && d < 2) throw InvalidParams("Iceberg needs d >= 2");
  }

  static std::uint64_t rounded_bins(std::uint64_t n, unsigned d) {
    if (n == 0) throw InvalidParams("need at least one bin");
    if (d == 0) throw InvalidParams("d must be at least 1");
    return (n + d - 1) / d * d;
  }

  Placement insert(std::uint64_t x) {
    Placement at;
    switch (rule_) {
      case BinRule::Single: at.bin = static_cast<std::uint32_t>(single_bin(x)); break;
      case BinRule::DLeft: at.bin = static_cast<std::uint32_t>(dleft_bin(x)); break;
      case BinRule::Iceberg: at = iceberg_place(x); break;
    }
    at.preload = load_[at.bin];
    place(x, at);
    return at;
  }

  void erase(std::uint64_t x) {
    auto it = balls_.find(x);
    if (it == balls_.end()) throw ContractViolation("delete of an absent ball");
    const Placement at = it->second;
    balls_.erase(it);
    --load_[at.bin];
    --preload_hist_[std::min(at.preload, kPreloadBuckets - 1)];
    if (rule_ == BinRule::Iceberg) {
      if (at.level == 1) --level_one_[at.bin];
      if (at.level == 2) {
        --level_two_[at.bin];
        --q_;
      }
      if (at.level == 3) --level_three_;
    }
  }

  std::optional<Placement> placement_of(std::uint64_t x) const {
    auto it = balls_.find(x);
    if (it == balls_.end()) return std::nullopt;
    return it->second;
  }

  std::uint64_t single_bin(std::uint64_t x) const noexcept { return hash_to_range(g_seed_, x, n_); }

  /// h_i(x), uniform in group i.
  std::uint64_t choice_bin(std::uint64_t x, unsigned i) const noexcept {
    return i * group_ + hash_stream(choice_seed_, x, i, group_);
  }

  /// Current maximum load, by scan.
  std::uint32_t max_load() const noexcept {
    return load_.empty() ? 0 : *std::max_element(load_.begin(), load_.end());
  }

  /// Live balls that found >= h + tau balls in their bin when inserted.
  std::uint64_t exposed_count(std::uint32_t tau) const noexcept {
    std::uint64_t total = 0;
    for (std::uint64_t pre = std::min<std::uint64_t>(h_ + tau, kPreloadBuckets); pre < kPreloadBuckets; ++pre)
      total += preload_hist_[pre];
    return total;
  }

  /// Level-two count recomputed from the per-ball placements.
  std::uint64_t recount_level_two() const {
    std::uint64_t total = 0;
    for (const auto& [x, at] : balls_) total += at.level == 2;
    return total;
  }

  std::uint32_t load(std::uint64_t bin) const noexcept { return load_[bin]; }
  std::uint32_t level_one_load(std::uint64_t bin) const noexcept {
    return rule_ == BinRule::Iceberg ? level_one_[bin] : load_[bin];
  }
  std::uint32_t level_two_load(std::uint64_t bin) const noexcept {
    return rule_ == BinRule::Iceberg ? level_two_[bin] : 0;
  }

  std::uint64_t balls() const noexcept { return balls_.size(); }
  std::uint64_t bins() const noexcept { return n_; }
  std::uint32_t h() const noexcept { return h_; }
  unsigned d() const noexcept { return d_; }
  std::uint32_t tau() const noexcept { return tau_; }
  BinRule rule() const noexcept { return rule_; }
  std::uint64_t level_two_count() const noexcept { return q_; }
  std::uint64_t level_two_cap() const noexcept { return level_two_cap_; }
  std::uint64_t level_three_count() const noexcept { return level_three_; }

  // Peaks over the whole history.
  std::uint32_t peak_load() const noexcept { return peak_load_; }
  std::uint64_t peak_level_two_count() const noexcept { return peak_q_; }
  std::uint32_t peak_level_two_load() const noexcept { return peak_level_two_; }
  std::uint64_t level_three_inserts() const noexcept { return level_three_inserts_; }

 private:
  std::uint64_t dleft_bin(std::uint64_t x) const noexcept {
    std::uint64_t best = choice_bin(x, 0);
    for (unsigned i = 1; i < d_; ++i) {
      const std::uint64_t b = choice_bin(x, i);
      if (load_[b] < load_[best]) best = b;
    }
    return best;
  }

  Placement iceberg_place(std::uint64_t x) const noexcept {
    const std::uint64_t g = single_bin(x);
    if (level_one_[g] <= h_ + tau_) return {static_cast<std::uint32_t>(g), 1, 0};
    if (q_ < level_two_cap_) {
      std::uint64_t best = choice_bin(x, 0);
      for (unsigned i = 1; i < d_; ++i) {
        const std::uint64_t b = choice_bin(x, i);
        if (level_two_[b] < level_two_[best]) best = b;
      }
      return {static_cast<std::uint32_t>(best), 2, 0};
    }
    return {0, 3, 0};
  }

  void place(std::uint64_t x, const Placement& at) {
    if (!balls_.emplace(x, at).second) throw ContractViolation("insert of a present ball");
    const std::uint32_t load = ++load_[at.bin];
    peak_load_ = std::max(peak_load_, load);
    ++preload_hist_[std::min(at.preload, kPreloadBuckets - 1)];
    if (rule_ != BinRule::Iceberg) return;
    switch (at.level) {
      case 1:
        ++level_one_[at.bin];
        TINYPTR_INVARIANT(level_one_[at.bin] <= h_ + tau_ + 1, "level-one cap h + tau + 1");
        break;
      case 2:
        ++q_;
        peak_q_ = std::max(peak_q_, q_);
        peak_level_two_ = std::max(peak_level_two_, ++level_two_[at.bin]);
        break;
      default:
        ++level_three_;
        ++level_three_inserts_;
        break;
    }
  }

  BinRule rule_;
  unsigned d_;
  std::uint64_t n_;
  std::uint32_t h_;
  std::uint32_t tau_;
  std::uint64_t group_;
  std::uint64_t level_two_cap_;
  HashSeed g_seed_;
  HashSeed choice_seed_;
  std::vector<std::uint32_t> load_;
  std::vector<std::uint32_t> level_one_;
  std::vector<std::uint32_t> level_two_;
  std::vector<std::uint64_t> preload_hist_;
  absl::flat_hash_map<std::uint64_t, Placement> balls_;
  std::uint64_t q_ = 0;
  std::uint64_t level_three_ = 0;
  std::uint32_t peak_load_ = 0;
  std::uint64_t peak_q_ = 0;
  std::uint32_t peak_level_two_ = 0;
  std::uint64_t level_three_inserts_ = 0;
};

}  // namespace tinyptr
