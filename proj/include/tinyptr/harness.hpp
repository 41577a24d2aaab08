#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tinyptr/experiments.hpp"

namespace tinyptr {

enum class OutputFormat : std::uint8_t { Json, Csv };

struct ExperimentConfig {
  std::string command;
  std::uint64_t n = 65536;
  std::optional<double> delta;  // per-command default when absent
  std::uint32_t h = 2;
  unsigned d = 2;
  unsigned v = 16;
  std::uint64_t ops = 1000000;
  std::uint64_t trials = 1;
  std::uint64_t seed = 1;
  OutputFormat output = OutputFormat::Json;
  std::string workload = "churn";
  std::string rule = "iceberg";
};

struct Metric {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string comparison;  // "<=", "<", ">=", "=="
  bool pass = false;
};

inline Metric check(std::string name, double value, std::string comparison, double threshold) {
  bool pass = false;
  if (comparison == "<=") pass = value <= threshold;
  if (comparison == "<") pass = value < threshold;
  if (comparison == ">=") pass = value >= threshold;
  if (comparison == "==") pass = value == threshold;
  return {std::move(name), value, threshold, std::move(comparison), pass};
}

struct Report {
  static constexpr int kSchemaVersion = 1;

  nlohmann::ordered_json config;
  nlohmann::ordered_json stats = nlohmann::ordered_json::object();
  std::vector<Metric> metrics;
  std::vector<std::string> columns;            // optional per-row table
  std::vector<std::vector<std::string>> rows;

  bool pass() const noexcept {
    for (const auto& m : metrics)
      if (!m.pass) return false;
    return true;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json out;
    out["schema_version"] = kSchemaVersion;
    out["config"] = config;
    out["stats"] = stats;
    out["metrics"] = nlohmann::ordered_json::array();
    for (const auto& m : metrics)
      out["metrics"].push_back({{"name", m.name},
                                {"value", m.value},
                                {"threshold", m.threshold},
                                {"comparison", m.comparison},
                                {"pass", m.pass}});
    if (!columns.empty()) {
      out["rows"] = nlohmann::ordered_json::array();
      for (const auto& row : rows) {
        nlohmann::ordered_json r;
        for (std::size_t i = 0; i < columns.size(); ++i) r[columns[i]] = row[i];
        out["rows"].push_back(r);
      }
    }
    out["pass"] = pass();
    return out;
  }

  /// The row table when there is one, else one row per metric.
  void write_csv(std::ostream& os) const {
    const auto line = [&os](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    if (!columns.empty()) {
      line(columns);
      for (const auto& row : rows) line(row);
      return;
    }
    line({"name", "value", "comparison", "threshold", "pass"});
    for (const auto& m : metrics)
      line({m.name, fmt(m.value), m.comparison, fmt(m.threshold), m.pass ? "true" : "false"});
  }

  void write(std::ostream& os, OutputFormat format) const {
    if (format == OutputFormat::Csv) {
      write_csv(os);
    } else {
      os << to_json().dump(2) << '\n';
    }
  }

  static std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
  }
};

inline nlohmann::ordered_json to_json(const TableStats& s) {
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (unsigned len = 0; len <= TinyPointer::kMaxBits; ++len)
    if (s.pointer_bit_histogram[len]) hist[std::to_string(len)] = s.pointer_bit_histogram[len];
  return {{"allocations", s.allocations},
          {"frees", s.frees},
          {"failures", s.failures},
          {"live", s.live()},
          {"mean_pointer_bits", s.mean_pointer_bits()},
          {"pointer_bit_histogram", hist}};
}

inline void accumulate(TableStats& into, const TableStats& s) {
  into.allocations += s.allocations;
  into.frees += s.frees;
  into.failures += s.failures;
  into.sum_pointer_bits += s.sum_pointer_bits;
  for (unsigned len = 0; len <= TinyPointer::kMaxBits; ++len)
    into.pointer_bit_histogram[len] += s.pointer_bit_histogram[len];
}

/// Fixed-size pointer width bound 2 (log2 log2 log2 n + log2 1/delta) + 8.
inline double fixed_width_bound(std::uint64_t n, double delta) {
  return 2.0 * (std::log2(std::log2(std::log2(static_cast<double>(n)))) + std::log2(1.0 / delta)) + 8.0;
}

/// Mean variable-size pointer bound C (1 + log2 1/delta) with C = 6.
inline double variable_mean_bound(double delta) { return 6.0 * (1.0 + std::log2(1.0 / delta)); }

/// Mean probe-index envelope 64 delta^-4 max(1, log2 1/delta). The primary
/// buckets hold O(delta'^-2 log 1/delta') slots with delta' = delta^2, and a
/// probe index is below 4 b for a pointer into a bucket of b slots.
inline double probe_envelope(double delta) {
  const double inv = 1.0 / delta;
  return 64.0 * inv * inv * inv * inv * std::max(1.0, std::log2(inv));
}

inline constexpr double kProbeSlopeBound = 3.0;

// ---------------------------------------------------------------------------

namespace detail {

inline double share(std::uint64_t count, std::uint64_t total) {
  return total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
}

inline Report bench_fixed(const ExperimentConfig& cfg) {
  const double delta = cfg.delta.value_or(0.125);
  const auto trials = run_trials(cfg.trials, [&](std::uint64_t t) {
    return run_fixed_trial(cfg.n, delta, cfg.workload, cfg.ops, trial_seed(cfg.seed, t));
  });
  Report r;
  TableStats total;
  std::uint64_t clean = 0;
  bool uniform = true;
  std::uint64_t max_failed_alive = 0;
  std::uint64_t max_secondary = 0;
  for (const auto& t : trials) {
    accumulate(total, t.stats);
    clean += t.stats.failures == 0;
    uniform = uniform && t.uniform_width;
    max_failed_alive = std::max(max_failed_alive, t.replay.max_failed_alive);
    max_secondary = std::max(max_secondary, t.max_secondary_live);
  }
  const unsigned width = trials.empty() ? 0 : trials.front().width;
  r.stats = to_json(total);
  r.stats["slots"] = trials.empty() ? 0 : trials.front().slots;
  r.stats["pointer_bits"] = width;
  r.stats["max_failed_alive"] = max_failed_alive;
  r.stats["max_secondary_live"] = max_secondary;
  r.metrics.push_back(check("clean_trial_share", share(clean, trials.size()), ">=", 0.99));
  r.metrics.push_back(check("pointer_bits_constant", uniform ? 1.0 : 0.0, "==", 1.0));
  r.metrics.push_back(check("pointer_bits", width, "<=", fixed_width_bound(cfg.n, delta)));
  return r;
}

inline Report bench_variable(const ExperimentConfig& cfg) {
  const double delta = cfg.delta.value_or(0.25);
  const auto trials = run_trials(cfg.trials, [&](std::uint64_t t) {
    return run_variable_trial(cfg.n, delta, cfg.workload, cfg.ops, trial_seed(cfg.seed, t));
  });
  Report r;
  TableStats total;
  std::uint64_t max_secondary = 0;
  for (const auto& t : trials) {
    accumulate(total, t.stats);
    max_secondary = std::max(max_secondary, t.max_secondary_live);
  }
  const double mean = total.mean_pointer_bits();
  r.stats = to_json(total);
  r.stats["slots"] = trials.empty() ? 0 : trials.front().slots;
  r.stats["nominal_pointer_bits"] = trials.empty() ? 0 : trials.front().width;
  r.stats["max_secondary_live"] = max_secondary;
  r.metrics.push_back(check("mean_pointer_bits", mean, "<=", variable_mean_bound(delta)));
  r.metrics.push_back(check("tail_share_mean_plus_8", share_at_least(total, mean + 8.0), "<", 1e-3));
  return r;
}

inline Report stable_dict(const ExperimentConfig& cfg) {
  const auto trials = run_trials(cfg.trials, [&](std::uint64_t t) {
    return run_stable_dict_trial(cfg.n, cfg.v, cfg.workload, cfg.ops, trial_seed(cfg.seed, t));
  });
  Report r;
  std::uint64_t violations = 0;
  std::uint64_t gets = 0;
  double worst_mean = 0.0;
  for (const auto& t : trials) {
    violations += t.violations;
    gets += t.gets;
    worst_mean = std::max(worst_mean, t.mean_pointer_bits);
  }
  r.stats["gets"] = gets;
  r.stats["table_slots"] = trials.empty() ? 0 : trials.front().table_slots;
  r.stats["chunked_pointers"] = !trials.empty() && trials.front().chunked;
  r.metrics.push_back(check("stability_violations", static_cast<double>(violations), "==", 0.0));
  r.metrics.push_back(check("mean_pointer_bits", worst_mean, "<=", 4.0 * std::log2(cfg.v) + 8.0));
  r.metrics.push_back(check("table_slots", r.stats["table_slots"].get<double>(), "==",
                            static_cast<double>(StableDict::table_slots(cfg.n, cfg.v))));
  return r;
}

inline Report retrieval(const ExperimentConfig& cfg) {
  const auto trials = run_trials(cfg.trials, [&](std::uint64_t t) {
    return run_retrieval_trial(cfg.n, cfg.workload, cfg.ops, trial_seed(cfg.seed, t));
  });
  Report r;
  std::uint64_t wrong = 0;
  std::uint64_t queries = 0;
  std::uint64_t max_slot = 0;
  double worst_mean = 0.0;
  for (const auto& t : trials) {
    wrong += t.wrong_values;
    queries += t.queries;
    max_slot = std::max(max_slot, t.max_slot);
    worst_mean = std::max(worst_mean, t.mean_retriever_bits);
  }
  r.stats["queries"] = queries;
  r.stats["max_slot"] = max_slot;
  r.metrics.push_back(check("max_slot", static_cast<double>(max_slot), "<", 2.0 * static_cast<double>(cfg.n)));
  r.metrics.push_back(check("wrong_values", static_cast<double>(wrong), "==", 0.0));
  r.metrics.push_back(check("mean_retriever_bits", worst_mean, "<=", 8.0));
  return r;
}

inline Report ballsbins(const ExperimentConfig& cfg) {
  auto rule = parse_bin_rule(cfg.rule);
  if (!rule) throw InvalidParams("unknown rule '" + cfg.rule + "'");
  const auto trials = run_trials(cfg.trials, [&](std::uint64_t t) {
    return run_balls_trial(*rule, cfg.n, cfg.h, cfg.d, cfg.workload, cfg.ops, trial_seed(cfg.seed, t));
  });
  Report r;
  r.columns = {"rule", "n", "h", "d", "tau", "max_load", "exposed", "q_max", "level3"};
  std::uint64_t level3_free = 0;
  std::uint64_t within = 0;
  std::uint32_t worst = 0;
  for (const auto& t : trials) {
    r.rows.push_back({std::string(to_string(t.rule)), std::to_string(t.n), std::to_string(t.h),
                      std::to_string(t.d), std::to_string(t.tau), std::to_string(t.max_load),
                      std::to_string(t.exposed), std::to_string(t.q_max), std::to_string(t.level3)});
    level3_free += t.level3 == 0;
    within += t.max_load <= iceberg_load_bound(t.n, t.h, t.d, t.tau);
    worst = std::max(worst, t.max_load);
  }
  r.stats["worst_max_load"] = worst;
  if (*rule == BinRule::Iceberg && !trials.empty()) {
    const auto& t = trials.front();
    r.stats["load_bound"] = iceberg_load_bound(t.n, t.h, t.d, t.tau);
    r.metrics.push_back(check("level3_free_share", share(level3_free, trials.size()), ">=", 0.99));
    r.metrics.push_back(check("max_load_within_bound_share", share(within, trials.size()), ">=", 0.95));
  }
  return r;
}

inline Report probe(const ExperimentConfig& cfg) {
  std::vector<double> deltas;
  if (cfg.delta) {
    deltas.push_back(*cfg.delta);
  } else {
    for (int k = 1; k <= 10; ++k) deltas.push_back(std::ldexp(1.0, -k));
  }
  const auto trials = run_trials(deltas.size(), [&](std::uint64_t i) {
    return run_probe_trial(cfg.n, deltas[i], cfg.ops, trial_seed(cfg.seed, i));
  });
  Report r;
  r.columns = {"delta", "mean", "p99", "max", "samples", "failures"};
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& t : trials) {
    r.rows.push_back({Report::fmt(t.delta), Report::fmt(t.mean), Report::fmt(t.p99), Report::fmt(t.max),
                      std::to_string(t.samples), std::to_string(t.failures)});
    r.metrics.push_back(check("mean_probe_delta_" + Report::fmt(t.delta), t.mean, "<=", probe_envelope(t.delta)));
    xs.push_back(std::log2(1.0 / t.delta));
    ys.push_back(std::log2(std::max(1.0, t.mean)));
  }
  if (trials.size() >= 2) r.metrics.push_back(check("log_log_slope", regression_slope(xs, ys), "<=", kProbeSlopeBound));
  return r;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j = {{"command", cfg.command}, {"n", cfg.n}};
  if (cfg.delta) j["delta"] = *cfg.delta;
  j["h"] = cfg.h;
  j["d"] = cfg.d;
  j["v"] = cfg.v;
  j["ops"] = cfg.ops;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["output"] = cfg.output == OutputFormat::Csv ? "csv" : "json";
  j["workload"] = cfg.workload;
  j["rule"] = cfg.rule;
  return j;
}

/// Runs the configured experiment. Throws InvalidParams for a bad config.
inline Report run(const ExperimentConfig& cfg) {
  if (cfg.trials == 0) throw InvalidParams("trials must be at least 1");
  if (cfg.delta) require_delta(*cfg.delta);
  Report r;
  if (cfg.command == "bench-fixed") {
    r = detail::bench_fixed(cfg);
  } else if (cfg.command == "bench-variable") {
    r = detail::bench_variable(cfg);
  } else if (cfg.command == "stable-dict") {
    r = detail::stable_dict(cfg);
  } else if (cfg.command == "retrieval") {
    r = detail::retrieval(cfg);
  } else if (cfg.command == "ballsbins") {
    r = detail::ballsbins(cfg);
  } else if (cfg.command == "probe") {
    r = detail::probe(cfg);
  } else {
    throw InvalidParams("unknown command '" + cfg.command + "'");
  }
  r.config = to_json(cfg);
  return r;
}

}  // namespace tinyptr
