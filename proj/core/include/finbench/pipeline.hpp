#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finbench/backtest.hpp"
#include "finbench/characteristics.hpp"
#include "finbench/error.hpp"
#include "finbench/metrics.hpp"
#include "finbench/panel.hpp"
#include "finbench/predictors.hpp"
#include "finbench/segmenter.hpp"

namespace finbench {

// A failure inside one pipeline stage; what() starts with "[stage] ".
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum class DataSource { Synth, Csv, Binary };

struct DataConfig {
  DataSource source = DataSource::Synth;
  std::filesystem::path path;  // csv / binary; resolved against the config file
  std::string csv_format = "long";
  std::size_t cohort_size = 10;  // synth
  std::size_t n_days = 250;      // synth
  std::vector<std::string> normalize;  // empty = every feature
};

struct SegmentConfig {
  std::size_t length = 250;
  std::size_t index = 0;         // segment used by run
  std::string universe = "all";  // all | uptrend | downtrend | volatile | extreme
  // Days the pattern labels are computed on: "segment" (the whole segment)
  // or "pre_test" (train + valid days only, so cohort membership cannot
  // depend on test-period prices).
  std::string label_window = "segment";
  SegmentOptions options;
};

struct OutputConfig {
  std::filesystem::path dir = "runs";
  bool include_series = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  SegmentConfig segment;
  SplitRatios split;
  std::vector<PredictorSpec> predictors;
  BacktestConfig backtest;
  IcMode ic_mode = IcMode::CrossSectional;
  CharacteristicsOptions characteristics;
  OutputConfig output;
  std::size_t jobs = 1;
};

// Parses and validates; throws ConfigError naming the offending field.
// Relative paths resolve against `base_dir`. A seed override replaces the
// file's seed before predictor seeds inherit it.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {},
                           std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);
std::string run_config_to_json(const RunConfig& config);
void validate(const RunConfig& config);

PricePanel load_data(const RunConfig& config);

// The dataset one run works on: the chosen segment restricted to the chosen
// universe, with its chronological split. With universe "all" the labeling
// only feeds the characteristics report; if it cannot be built the labeling
// is left empty and a warning is recorded.
struct RunDataset {
  PricePanel segment_panel;  // every stock, segment days only
  PricePanel panel;          // universe stocks, segment days only
  SegmentLabeling labeling;
  FeaturePanel features;
  ReturnPanel returns;
  DatasetSplit split;
};

RunDataset prepare_dataset(const RunConfig& config, const PricePanel& full, Diagnostics* diagnostics = nullptr);

// Fits every configured predictor on the dataset (train + valid days only).
std::vector<TrainedModel> train_models(const RunConfig& config, const RunDataset& dataset);

struct ModelResult {
  TrainedModel model;
  ScorePanel scores;
  PortfolioState portfolio;
  std::vector<double> benchmark;
  MetricsReport metrics;
};

ModelResult evaluate_model(const RunConfig& config, const RunDataset& dataset, const TrainedModel& model);

struct RunResult {
  std::filesystem::path archive;
  std::vector<std::string> model_names;
  std::map<std::string, MetricsReport> metrics;
};

inline constexpr const char* kArchiveFormat = "finbench-archive/1";

std::filesystem::path cmd_synth(const RunConfig& config);
std::filesystem::path cmd_build(const RunConfig& config);
std::filesystem::path cmd_characterize(const RunConfig& config);
RunResult cmd_run(const RunConfig& config);
// Writes report.csv, report.md and cumulative_returns.csv into `out_dir`.
std::filesystem::path cmd_report(const std::vector<std::filesystem::path>& archives,
                                 const std::filesystem::path& out_dir);

// Summary metrics.json of an archive: model name -> report without series.
std::string metrics_summary_json(const std::vector<std::string>& names,
                                 const std::map<std::string, MetricsReport>& metrics);

}  // namespace finbench
