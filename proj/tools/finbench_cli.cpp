// finbench: synth | build | characterize | run | report
//
// Exit codes: 0 ok, 1 unexpected, 2 config, 3 data, 4 stage/numeric,
// 5 archive, 64 usage.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "finbench/pipeline.hpp"

namespace fs = std::filesystem;
using namespace finbench;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> jobs;
};

RunConfig resolve(const Globals& g) {
  RunConfig c = g.config.empty() ? [&] {
    if (!g.seed) throw ConfigError("config field 'seed': required (pass --config or --seed)");
    return parse_run_config("{}", fs::current_path(), g.seed);
  }()
                                 : load_run_config(g.config, g.seed);
  if (!g.out.empty()) c.output.dir = fs::absolute(g.out);
  if (g.jobs) c.jobs = *g.jobs;
  validate(c);
  return c;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const StageError*>(&e)) {
    return 4;
  }
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const ArchiveError*>(&e)) return 5;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finbench: dataset construction, training, backtesting and scoring for stock forecasting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override the configured seed");
  app.add_option("--out", g.out, "output directory (overrides output.dir)");
  app.add_option("--jobs", g.jobs, "parallel training jobs")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "generate a synthetic panel and its ground-truth labels");
  auto* build = app.add_subcommand("build", "segment, label, normalize and split the configured data");
  auto* characterize = app.add_subcommand("characterize", "per-pattern characteristics report");
  auto* run = app.add_subcommand("run", "train, predict, backtest and score every predictor; archive");
  auto* report = app.add_subcommand("report", "compare archived runs");
  std::vector<std::string> archives;
  report->add_option("archives", archives, "run archive directories")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 64;
  }

  try {
    if (report->parsed()) {
      std::vector<fs::path> paths(archives.begin(), archives.end());
      const fs::path out = g.out.empty() ? fs::path("report") : fs::path(g.out);
      std::fprintf(stderr, "report written to %s\n", cmd_report(paths, out).string().c_str());
      return 0;
    }
    const RunConfig config = resolve(g);
    if (synth->parsed()) {
      std::fprintf(stderr, "synthetic panel written to %s\n", cmd_synth(config).string().c_str());
    } else if (build->parsed()) {
      std::fprintf(stderr, "datasets written to %s\n", cmd_build(config).string().c_str());
    } else if (characterize->parsed()) {
      std::fprintf(stderr, "characteristics written to %s\n", cmd_characterize(config).string().c_str());
    } else if (run->parsed()) {
      const RunResult r = cmd_run(config);
      std::printf("%s\n", r.archive.string().c_str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  }
}
