#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "tinyptr/harness.hpp"

namespace {

const std::map<std::string, std::string> kCommands = {
    {"bench-fixed", "Fixed-size dereference table under a workload"},
    {"bench-variable", "Variable-size dereference table under a workload"},
    {"stable-dict", "Stable dictionary: slot stability and stored pointer size"},
    {"retrieval", "Relaxed retrieval: slot universe and retriever size"},
    {"ballsbins", "Balls-and-bins placement rules, one CSV row per trial"},
    {"probe", "Probe-index statistics of the variable-size table (sweeps delta if omitted)"},
};

void add_options(CLI::App& sub, tinyptr::ExperimentConfig& cfg, std::string& output, std::string& out_path) {
  sub.add_option("--n", cfg.n, "Slots, capacity or bins")->check(CLI::PositiveNumber);
  sub.add_option_function<double>("--delta", [&cfg](double d) { cfg.delta = d; }, "Slack: load factor is 1 - delta")
      ->check(CLI::Range(0.0, 1.0));
  sub.add_option("--h", cfg.h, "Average balls per bin")->check(CLI::PositiveNumber);
  sub.add_option("--d", cfg.d, "Choices per ball")->check(CLI::PositiveNumber);
  sub.add_option("--v", cfg.v, "Value width in bits (stable-dict)")->check(CLI::Range(1, 64));
  sub.add_option("--ops", cfg.ops, "Operations per trial, including the fill phase");
  sub.add_option("--trials", cfg.trials, "Independent seeded trials")->check(CLI::PositiveNumber);
  sub.add_option("--seed", cfg.seed, "Master seed");
  sub.add_option("--output", output, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sub.add_option("--workload", cfg.workload, "churn, fifo, reinsert or file:<path>");
  sub.add_option("--rule", cfg.rule, "single, dleft or iceberg")->check(CLI::IsMember({"single", "dleft", "iceberg"}));
  sub.add_option("--out", out_path, "Write the report here instead of stdout");
}

void print_error(const std::string& type, const std::string& message) {
  nlohmann::ordered_json err = {{"error", {{"type", type}, {"message", message}}}};
  std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiny pointer tables and balls-and-bins experiments"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help and exit");  // -h is taken by --h

  tinyptr::ExperimentConfig cfg;
  std::string output = "json";
  std::string out_path;
  for (const auto& [name, help] : kCommands) {
    auto* sub = app.add_subcommand(name, help);
    add_options(*sub, cfg, output, out_path);
    sub->callback([&cfg, name = name] { cfg.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return 2;
  }
  cfg.output = output == "csv" ? tinyptr::OutputFormat::Csv : tinyptr::OutputFormat::Json;

  try {
    const tinyptr::Report report = tinyptr::run(cfg);
    if (out_path.empty()) {
      report.write(std::cout, cfg.output);
    } else {
      std::ofstream out(out_path);
      if (!out) {
        print_error("io", "cannot write " + out_path);
        return 2;
      }
      report.write(out, cfg.output);
    }
    return report.pass() ? 0 : 1;
  } catch (const tinyptr::InvalidParams& e) {
    print_error("config", e.what());
  } catch (const std::exception& e) {
    print_error("experiment", e.what());
  }
  return 2;
}
