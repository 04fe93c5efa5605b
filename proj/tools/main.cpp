#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "slowrec/parallel.hpp"

namespace fs = std::filesystem;
using namespace slowrec;

namespace {

enum Exit { ok = 0, config_error = 2, numeric_error = 3, budget_error = 4 };

void log(const std::string& msg) { fmt::print(stderr, "slowrec: {}\n", msg); }

int report(int code, const Error& e) {
  fmt::print(stderr, "error={} exit={} message={}\n", e.name(), code, e.what());
  return code;
}

// Writes every file under a temporary name, then renames; on failure nothing remains.
void write_all(const std::vector<std::pair<std::string, std::string>>& files) {
  std::vector<std::pair<fs::path, fs::path>> staged;
  try {
    for (const auto& [path, content] : files) {
      fs::path target(path), tmp(path + ".partial");
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw ConfigError("cannot write " + path);
      staged.emplace_back(tmp, target);
      out << content;
      if (!out.flush()) throw ConfigError("cannot write " + path);
    }
    for (const auto& [tmp, target] : staged) fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    for (const auto& [tmp, target] : staged) fs::remove(tmp, ec);
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slow recurrence experiments for piecewise expanding maps"};
  std::string command, config_path, output, summary;
  std::vector<std::string> overrides;
  long long seed = -1;
  int workers = 0;
  std::string names;
  for (const auto& n : cli::command_names()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("command", command, "one of: " + names)->required();
  app.add_option("-c,--config", config_path, "experiment config (INI)")->required();
  app.add_option("-o,--output", output, "CSV output path (default: run.output, else stdout)");
  app.add_option("--summary", summary, "summary output path (default: run.summary, else stdout)");
  app.add_option("--seed", seed, "overrides run.seed");
  app.add_option("-j,--workers", workers, "overrides run.workers and SLOWREC_WORKERS");
  app.add_option("--set", overrides, "section.key=value override, repeatable");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    auto cfg = cli::Config::load(config_path);
    for (const auto& o : overrides) cfg.set(o);
    cli::RunOptions opts;
    long cfg_seed = cfg.integer("run.seed", 1);
    if (cfg_seed < 0) throw ConfigError("run.seed must be non-negative");
    opts.seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : static_cast<std::uint64_t>(cfg_seed);
    long cfg_workers = cfg.integer("run.workers", 0);
    opts.workers = workers > 0 ? workers : (cfg_workers > 0 ? static_cast<int>(cfg_workers) : default_workers());
    if (output.empty()) output = cfg.text("run.output", "");
    if (summary.empty()) summary = cfg.text("run.summary", "");

    log(fmt::format("{} config={} seed={} workers={}", command, config_path, opts.seed, opts.workers));
    auto art = cli::run_command(command, cfg, opts);

    std::vector<std::pair<std::string, std::string>> files = art.extra;
    if (!output.empty()) files.emplace_back(output, art.csv);
    if (!summary.empty()) files.emplace_back(summary, art.summary);
    write_all(files);
    if (output.empty()) fmt::print("{}", art.csv);
    if (summary.empty()) {
      // keep stdout parseable as CSV when the table goes there too
      std::istringstream lines(art.summary);
      std::string line;
      while (std::getline(lines, line)) fmt::print("{}{}\n", output.empty() ? "# " : "", line);
    }
    log("done");
    return ok;
  } catch (const ConfigError& e) {
    return report(config_error, e);
  } catch (const InvalidParameters& e) {
    return report(config_error, e);
  } catch (const SampleBudgetExceeded& e) {
    return report(budget_error, e);
  } catch (const ExactCapExceeded& e) {
    return report(budget_error, e);
  } catch (const IntervalCountOverflow& e) {
    return report(budget_error, e);
  } catch (const Error& e) {
    return report(numeric_error, e);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error=Internal exit={} message={}\n", static_cast<int>(numeric_error), e.what());
    return numeric_error;
  }
}
