#include "finbench/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "finbench/panel_io.hpp"
#include "finbench/synth.hpp"

namespace finbench {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---- config parsing ----

const json* member(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

template <class T>
void read_field(const json& obj, const char* key, const std::string& section, T& out) {
  const json* v = member(obj, key);
  if (!v) return;
  const std::string field = section.empty() ? key : section + "." + key;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v->is_number_unsigned()) field_error(field, "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) field_error(field, "expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) field_error(field, "expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v->is_string()) field_error(field, "expected a string");
    }
    out = v->get<T>();
  } catch (const json::exception& e) {
    field_error(field, e.what());
  }
}

const json& section_of(const json& root, const char* key, const json& empty) {
  const json* s = member(root, key);
  if (!s) return empty;
  if (!s->is_object()) field_error(key, "expected an object");
  return *s;
}

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      field_error(section.empty() ? key : section + "." + key, "unknown field");
    }
  }
}

template <class F>
auto with_field(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    field_error(field, e.what());
  }
}

AdfTrend parse_adf_trend(const std::string& s) {
  if (s == "c") return AdfTrend::Constant;
  if (s == "ct") return AdfTrend::ConstantTrend;
  throw ConfigError("expected c or ct");
}

const char* adf_trend_name(AdfTrend t) { return t == AdfTrend::Constant ? "c" : "ct"; }

EntropyNormalization parse_entropy(const std::string& s) {
  if (s == "log_bins") return EntropyNormalization::LogBins;
  if (s == "log_2pi") return EntropyNormalization::Log2Pi;
  throw ConfigError("expected log_bins or log_2pi");
}

const char* entropy_name(EntropyNormalization n) {
  return n == EntropyNormalization::LogBins ? "log_bins" : "log_2pi";
}

const char* source_name(DataSource s) {
  switch (s) {
    case DataSource::Synth:
      return "synth";
    case DataSource::Csv:
      return "csv";
    case DataSource::Binary:
      return "binary";
  }
  return "synth";
}

PredictorSpec parse_predictor(const json& j, const std::string& section, std::uint64_t seed) {
  if (!j.is_object()) field_error(section, "expected an object");
  reject_unknown(j, section,
                 {"kind", "name", "lookback", "window", "ridge_lambda", "learning_rate", "epochs", "patience", "eta",
                  "pair_samples", "line_search", "warm_start", "seed"});
  PredictorSpec spec;
  spec.seed = seed;
  std::string kind;
  read_field(j, "kind", section, kind);
  if (kind.empty()) field_error(section + ".kind", "required");
  spec.kind = with_field(section + ".kind", [&] { return parse_predictor_kind(kind); });
  read_field(j, "name", section, spec.name);
  read_field(j, "lookback", section, spec.lookback);
  read_field(j, "window", section, spec.window);
  read_field(j, "ridge_lambda", section, spec.ridge_lambda);
  read_field(j, "learning_rate", section, spec.learning_rate);
  read_field(j, "epochs", section, spec.epochs);
  read_field(j, "patience", section, spec.patience);
  read_field(j, "eta", section, spec.eta);
  read_field(j, "pair_samples", section, spec.pair_samples);
  read_field(j, "line_search", section, spec.line_search);
  read_field(j, "warm_start", section, spec.warm_start);
  read_field(j, "seed", section, spec.seed);
  with_field(section, [&] {
    spec.validate();
    return 0;
  });
  return spec;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(root, "",
                 {"seed", "data", "segment", "split", "predictors", "backtest", "metrics", "characteristics", "output",
                  "jobs"});
  RunConfig c;
  if (seed_override) {
    c.seed = *seed_override;
  } else {
    if (!member(root, "seed")) field_error("seed", "required");
    read_field(root, "seed", "", c.seed);
  }
  read_field(root, "jobs", "", c.jobs);
  const json empty = json::object();

  const json& data = section_of(root, "data", empty);
  reject_unknown(data, "data", {"source", "path", "format", "cohort_size", "n_days", "normalize"});
  std::string source = "synth";
  read_field(data, "source", "data", source);
  if (source == "synth") {
    c.data.source = DataSource::Synth;
  } else if (source == "csv") {
    c.data.source = DataSource::Csv;
  } else if (source == "binary") {
    c.data.source = DataSource::Binary;
  } else {
    field_error("data.source", "expected synth, csv or binary");
  }
  std::string path;
  read_field(data, "path", "data", path);
  if (!path.empty()) c.data.path = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
  read_field(data, "format", "data", c.data.csv_format);
  read_field(data, "cohort_size", "data", c.data.cohort_size);
  read_field(data, "n_days", "data", c.data.n_days);
  read_field(data, "normalize", "data", c.data.normalize);

  const json& seg = section_of(root, "segment", empty);
  reject_unknown(seg, "segment", {"length", "index", "universe", "label_window", "cohort_size", "z_threshold",
                                  "mad_fallback_cap"});
  read_field(seg, "length", "segment", c.segment.length);
  read_field(seg, "index", "segment", c.segment.index);
  read_field(seg, "universe", "segment", c.segment.universe);
  read_field(seg, "label_window", "segment", c.segment.label_window);
  read_field(seg, "cohort_size", "segment", c.segment.options.cohort_size);
  read_field(seg, "z_threshold", "segment", c.segment.options.z_threshold);
  read_field(seg, "mad_fallback_cap", "segment", c.segment.options.mad_fallback_cap);

  const json& split = section_of(root, "split", empty);
  reject_unknown(split, "split", {"ratios"});
  if (const json* r = member(split, "ratios")) {
    if (!r->is_array() || r->size() != 3 || !std::all_of(r->begin(), r->end(), [](const json& v) {
          return v.is_number_unsigned();
        })) {
      field_error("split.ratios", "expected three non-negative integers");
    }
    c.split = SplitRatios{(*r)[0].get<std::size_t>(), (*r)[1].get<std::size_t>(), (*r)[2].get<std::size_t>()};
  }

  if (const json* preds = member(root, "predictors")) {
    if (!preds->is_array()) field_error("predictors", "expected an array");
    for (std::size_t k = 0; k < preds->size(); ++k) {
      c.predictors.push_back(parse_predictor((*preds)[k], "predictors[" + std::to_string(k) + "]", c.seed));
    }
  }

  const json& bt = section_of(root, "backtest", empty);
  reject_unknown(bt, "backtest",
                 {"strategy", "m", "n", "fee_rate", "initial_capital", "benchmark", "reequalize"});
  std::string strategy = std::string(to_string(c.backtest.strategy));
  read_field(bt, "strategy", "backtest", strategy);
  c.backtest.strategy = with_field("backtest.strategy", [&] { return parse_strategy(strategy); });
  read_field(bt, "m", "backtest", c.backtest.m);
  read_field(bt, "n", "backtest", c.backtest.n);
  read_field(bt, "fee_rate", "backtest", c.backtest.fee_rate);
  read_field(bt, "initial_capital", "backtest", c.backtest.initial_capital);
  read_field(bt, "reequalize", "backtest", c.backtest.reequalize);
  if (const json* b = member(bt, "benchmark")) {
    if (b->is_string() && b->get<std::string>() == "equal_weight") {
      c.backtest.benchmark = BenchmarkKind::EqualWeightUniverse;
    } else if (b->is_array()) {
      c.backtest.benchmark = BenchmarkKind::External;
      for (const auto& v : *b) {
        if (!v.is_number()) field_error("backtest.benchmark", "expected numbers");
        c.backtest.external_benchmark.push_back(v.get<double>());
      }
    } else {
      field_error("backtest.benchmark", "expected \"equal_weight\" or an array of daily returns");
    }
  }

  const json& met = section_of(root, "metrics", empty);
  reject_unknown(met, "metrics", {"ic_mode", "include_series"});
  std::string ic_mode = std::string(to_string(c.ic_mode));
  read_field(met, "ic_mode", "metrics", ic_mode);
  c.ic_mode = with_field("metrics.ic_mode", [&] { return parse_ic_mode(ic_mode); });
  read_field(met, "include_series", "metrics", c.output.include_series);

  const json& ch = section_of(root, "characteristics", empty);
  reject_unknown(ch, "characteristics", {"adf_lags", "adf_trend", "autocorr_lag", "entropy_normalization"});
  if (member(ch, "adf_lags")) {
    std::size_t lags = 0;
    read_field(ch, "adf_lags", "characteristics", lags);
    c.characteristics.adf_lags = lags;
  }
  std::string trend = adf_trend_name(c.characteristics.adf_trend);
  read_field(ch, "adf_trend", "characteristics", trend);
  c.characteristics.adf_trend = with_field("characteristics.adf_trend", [&] { return parse_adf_trend(trend); });
  read_field(ch, "autocorr_lag", "characteristics", c.characteristics.autocorr_lag);
  std::string entropy = entropy_name(c.characteristics.forecastability.normalization);
  read_field(ch, "entropy_normalization", "characteristics", entropy);
  c.characteristics.forecastability.normalization =
      with_field("characteristics.entropy_normalization", [&] { return parse_entropy(entropy); });

  const json& out = section_of(root, "output", empty);
  reject_unknown(out, "output", {"dir"});
  std::string dir;
  read_field(out, "dir", "output", dir);
  if (!dir.empty()) c.output.dir = fs::path(dir).is_absolute() ? fs::path(dir) : base_dir / dir;
  else if (!base_dir.empty()) c.output.dir = base_dir / c.output.dir;

  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  if (c.data.source == DataSource::Synth) {
    if (c.data.cohort_size == 0) field_error("data.cohort_size", "must be positive");
    if (c.data.n_days < 2) field_error("data.n_days", "must be at least 2");
  } else {
    if (c.data.path.empty()) field_error("data.path", "required for csv and binary sources");
    if (!fs::exists(c.data.path)) field_error("data.path", "file not found: " + c.data.path.string());
    if (c.data.csv_format != "long" && c.data.csv_format != "wide") field_error("data.format", "expected long or wide");
  }
  if (c.segment.length < 10) field_error("segment.length", "must be at least 10");
  if (c.segment.options.cohort_size == 0) field_error("segment.cohort_size", "must be positive");
  if (!(c.segment.options.z_threshold > 0)) field_error("segment.z_threshold", "must be positive");
  if (c.segment.label_window != "segment" && c.segment.label_window != "pre_test") {
    field_error("segment.label_window", "expected segment or pre_test");
  }
  if (c.segment.universe != "all") with_field("segment.universe", [&] { return parse_pattern(c.segment.universe); });
  if (c.split.train + c.split.valid + c.split.test == 0 || c.split.train == 0 || c.split.valid == 0 ||
      c.split.test == 0) {
    field_error("split.ratios", "every part must be positive");
  }
  std::set<std::string> names;
  for (std::size_t k = 0; k < c.predictors.size(); ++k) {
    if (!names.insert(c.predictors[k].label()).second) {
      field_error("predictors[" + std::to_string(k) + "].name", "duplicate name '" + c.predictors[k].label() + "'");
    }
  }
  if (c.backtest.m == 0 || c.backtest.n == 0 || c.backtest.n > c.backtest.m) field_error("backtest", "need 1 <= n <= m");
  if (!(c.backtest.fee_rate >= 0.0 && c.backtest.fee_rate < 0.05)) field_error("backtest.fee_rate", "must lie in [0, 0.05)");
  if (!(c.backtest.initial_capital > 0.0)) field_error("backtest.initial_capital", "must be positive");
  if (c.jobs == 0) field_error("jobs", "must be positive");
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), fs::absolute(path).parent_path(), seed_override);
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  json& d = j["data"];
  d["source"] = source_name(c.data.source);
  if (c.data.source == DataSource::Synth) {
    d["cohort_size"] = c.data.cohort_size;
    d["n_days"] = c.data.n_days;
  } else {
    d["path"] = c.data.path.generic_string();
    d["format"] = c.data.csv_format;
  }
  d["normalize"] = c.data.normalize;
  json& s = j["segment"];
  s["length"] = c.segment.length;
  s["index"] = c.segment.index;
  s["universe"] = c.segment.universe;
  s["label_window"] = c.segment.label_window;
  s["cohort_size"] = c.segment.options.cohort_size;
  s["z_threshold"] = c.segment.options.z_threshold;
  s["mad_fallback_cap"] = c.segment.options.mad_fallback_cap;
  j["split"]["ratios"] = {c.split.train, c.split.valid, c.split.test};
  j["predictors"] = json::array();
  for (const auto& p : c.predictors) {
    json q;
    q["kind"] = to_string(p.kind);
    q["name"] = p.label();
    q["lookback"] = p.lookback;
    q["window"] = p.window;
    q["ridge_lambda"] = p.ridge_lambda;
    q["learning_rate"] = p.learning_rate;
    q["epochs"] = p.epochs;
    q["patience"] = p.patience;
    q["eta"] = p.eta;
    q["pair_samples"] = p.pair_samples;
    q["line_search"] = p.line_search;
    q["warm_start"] = p.warm_start;
    q["seed"] = p.seed;
    j["predictors"].push_back(q);
  }
  json& b = j["backtest"];
  b["strategy"] = to_string(c.backtest.strategy);
  b["m"] = c.backtest.m;
  b["n"] = c.backtest.n;
  b["fee_rate"] = c.backtest.fee_rate;
  b["initial_capital"] = c.backtest.initial_capital;
  if (c.backtest.benchmark == BenchmarkKind::External) {
    b["benchmark"] = c.backtest.external_benchmark;
  } else {
    b["benchmark"] = "equal_weight";
  }
  b["reequalize"] = c.backtest.reequalize;
  j["metrics"]["ic_mode"] = to_string(c.ic_mode);
  j["metrics"]["include_series"] = c.output.include_series;
  json& ch = j["characteristics"];
  if (c.characteristics.adf_lags) ch["adf_lags"] = *c.characteristics.adf_lags;
  ch["adf_trend"] = adf_trend_name(c.characteristics.adf_trend);
  ch["autocorr_lag"] = c.characteristics.autocorr_lag;
  ch["entropy_normalization"] = entropy_name(c.characteristics.forecastability.normalization);
  j["output"]["dir"] = c.output.dir.generic_string();
  return j.dump(2) + "\n";
}

PricePanel load_data(const RunConfig& c) {
  try {
    switch (c.data.source) {
      case DataSource::Synth:
        return generate_pattern_panel(c.data.cohort_size, c.seed, c.data.n_days).panel;
      case DataSource::Csv:
        return load_panel(c.data.path, c.data.csv_format == "wide" ? CsvFormat::Wide : CsvFormat::Long);
      case DataSource::Binary:
        return load_panel_binary(c.data.path);
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("data", e.what());
  }
  throw StageError("data", "unknown data source");
}

namespace {

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

RunDataset prepare_dataset(const RunConfig& c, const PricePanel& full, Diagnostics* diag) {
  return stage("build", [&] {
    const auto cut = cut_segments(full.n_days(), c.segment.length);
    if (c.segment.index >= cut.segments.size()) {
      throw ConfigError("segment.index " + std::to_string(c.segment.index) + " out of range (" +
                        std::to_string(cut.segments.size()) + " segments)");
    }
    PricePanel seg_panel = full.slice_days(cut.segments[c.segment.index]);
    const ReturnPanel seg_returns = compute_returns(seg_panel);
    const DatasetSplit split = split_chronological(seg_panel.n_days(), c.split);
    const Segment label_days{0, c.segment.label_window == "pre_test" ? split.test.begin : seg_panel.n_days()};
    SegmentLabeling labeling;
    if (c.segment.universe == "all") {
      try {
        labeling = classify_segment(seg_returns, seg_panel.stock_ids(), label_days, c.segment.options);
      } catch (const Error& e) {
        labeling.segment = label_days;
        if (diag) diag->warn(std::string("pattern labels unavailable: ") + e.what());
      }
    } else {
      labeling = classify_segment(seg_returns, seg_panel.stock_ids(), label_days, c.segment.options);
    }

    std::vector<std::size_t> members;
    if (c.segment.universe == "all") {
      for (std::size_t i = 0; i < seg_panel.n_stocks(); ++i) members.push_back(i);
    } else {
      const auto want = parse_pattern(c.segment.universe);
      for (std::size_t i = 0; i < seg_panel.n_stocks(); ++i) {
        const auto it = labeling.labels.find(seg_panel.stock_ids()[i]);
        if (it != labeling.labels.end() && it->second == want) members.push_back(i);
      }
    }
    if (members.size() < 3) throw DataError("universe '" + c.segment.universe + "' has fewer than 3 stocks");
    PricePanel panel = seg_panel.select_stocks(members);
    FeaturePanel features = cross_sectional_normalize(panel, NormalizationOptions{c.data.normalize}, diag);
    ReturnPanel returns = compute_returns(panel);
    return RunDataset{std::move(seg_panel), std::move(panel), std::move(labeling), std::move(features),
                      std::move(returns), split};
  });
}

std::vector<TrainedModel> train_models(const RunConfig& c, const RunDataset& ds) {
  std::vector<TrainedModel> models(c.predictors.size());
  std::vector<std::exception_ptr> errors(c.predictors.size());
  // Training only ever sees days before the test range.
  const MarketData data{ds.features, ds.returns};
  auto work = [&](std::size_t k) {
    try {
      auto predictor = make_predictor(c.predictors[k]);
      predictor->fit(data, ds.split);
      models[k] = predictor->model();
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const std::size_t jobs = std::min<std::size_t>(std::max<std::size_t>(c.jobs, 1), c.predictors.size());
  if (jobs <= 1) {
    for (std::size_t k = 0; k < models.size(); ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex mu;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard lock(mu);
            if (next == models.size()) return;
            k = next++;
          }
          work(k);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const std::exception& e) {
      throw StageError("train", c.predictors[k].label() + ": " + e.what());
    }
  }
  return models;
}

ModelResult evaluate_model(const RunConfig& c, const RunDataset& ds, const TrainedModel& model) {
  ModelResult r;
  r.model = model;
  const MarketData data{ds.features, ds.returns};
  r.scores = stage("predict", [&] {
    const auto predictor = make_predictor(model);
    return predict_range(*predictor, data, ds.split.test);
  });
  r.portfolio = stage("backtest", [&] {
    BacktestConfig bt = c.backtest;
    if (bt.m > ds.panel.n_stocks()) throw ConfigError("backtest.m exceeds the universe size");
    return run_backtest(r.scores, ds.panel, bt, ds.split.test);
  });
  r.benchmark = stage("backtest", [&] { return benchmark_returns(c.backtest, ds.panel, ds.returns, ds.split.test); });
  r.metrics = stage("metrics", [&] {
    return evaluate(EvaluationInputs{r.scores, ds.returns, ds.split.test, r.portfolio.daily_returns, r.benchmark,
                                     c.ic_mode});
  });
  return r;
}

// ---- commands ----

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArchiveError("cannot write " + path.string());
  out << text;
  if (!out) throw ArchiveError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
void write_stream(const fs::path& path, F&& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArchiveError("cannot write " + path.string());
  f(out);
  if (!out) throw ArchiveError("write failed for " + path.string());
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path unique_dir(const fs::path& parent, const std::string& stem) {
  fs::path p = parent / stem;
  for (int k = 1; fs::exists(p); ++k) p = parent / (stem + "-" + std::to_string(k));
  return p;
}

void write_predictions_csv(std::ostream& out, const ScorePanel& scores, const PricePanel& panel, DayRange days) {
  out << "day,date,stock_id,score\n";
  for (std::size_t t = days.begin; t < days.end; ++t) {
    for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
      if (!scores.valid(i, t)) continue;
      out << t << ',' << panel.calendar()[t] << ',' << panel.stock_ids()[i] << ',' << format_double(scores.value(i, t))
          << '\n';
    }
  }
}

void write_training_log_csv(std::ostream& out, const TrainedModel& m) {
  out << "epoch,train_loss,valid_ic\n";
  for (const auto& e : m.log) {
    out << e.epoch << ',' << format_double(e.train_loss) << ','
        << (std::isfinite(e.valid_ic) ? format_double(e.valid_ic) : std::string()) << '\n';
  }
}

std::string sanitize(const std::string& name) {
  std::string s = name;
  for (char& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return s;
}

fs::path ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ArchiveError("cannot create directory " + p.string() + ": " + ec.message());
  return p;
}

}  // namespace

std::string metrics_summary_json(const std::vector<std::string>& names,
                                 const std::map<std::string, MetricsReport>& metrics) {
  json j = json::object();
  for (const auto& n : names) j[n] = json::parse(metrics_to_json(metrics.at(n), false));
  return j.dump(2) + "\n";
}

fs::path cmd_synth(const RunConfig& c) {
  if (c.data.source != DataSource::Synth) throw ConfigError("config field 'data.source': synth command needs synth");
  const auto ds = stage("synth", [&] { return generate_pattern_panel(c.data.cohort_size, c.seed, c.data.n_days); });
  const fs::path out = ensure_dir(c.output.dir);
  save_panel(ds.panel, out / "panel.csv");
  write_stream(out / "truth.csv", [&](std::ostream& o) { write_truth_csv(o, ds.truth); });
  return out;
}

fs::path cmd_build(const RunConfig& c) {
  const PricePanel full = load_data(c);
  const fs::path out = ensure_dir(c.output.dir / "build");
  Diagnostics diag;
  stage("build", [&] {
    const auto cut = cut_segments(full.n_days(), c.segment.length);
    std::vector<SegmentLabeling> labelings;
    json splits = json::array();
    for (std::size_t k = 0; k < cut.segments.size(); ++k) {
      const PricePanel seg = full.slice_days(cut.segments[k]);
      const ReturnPanel returns = compute_returns(seg);
      SegmentLabeling lab = classify_segment(returns, seg.stock_ids(), Segment{0, seg.n_days()}, c.segment.options);
      const DatasetSplit split = split_chronological(seg.n_days(), c.split);
      json s;
      s["segment"] = k;
      s["first_date"] = seg.calendar().front();
      s["last_date"] = seg.calendar().back();
      s["train"] = {split.train.begin, split.train.end};
      s["valid"] = {split.valid.begin, split.valid.end};
      s["test"] = {split.test.begin, split.test.end};
      if (lab.shortfall) {
        s["cohort_shortfall"] = {{"requested", lab.shortfall->requested},
                                 {"granted", lab.shortfall->granted},
                                 {"eligible", lab.shortfall->eligible}};
      }
      splits.push_back(s);
      for (MovementPattern p : kAllPatterns) {
        const auto names = lab.members(p);
        if (names.empty()) continue;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < seg.n_stocks(); ++i) {
          if (std::binary_search(names.begin(), names.end(), seg.stock_ids()[i])) idx.push_back(i);
        }
        const PricePanel cohort = seg.select_stocks(idx);
        const FeaturePanel z = cross_sectional_normalize(cohort, NormalizationOptions{c.data.normalize}, &diag);
        save_panel(cohort, out / ("segment" + std::to_string(k) + "_" + std::string(to_string(p)) + ".csv"));
        write_stream(out / ("segment" + std::to_string(k) + "_" + std::string(to_string(p)) + "_normalized.csv"),
                     [&](std::ostream& o) {
                       o << "stock_id,date";
                       for (const auto& f : z.feature_names) o << ',' << f;
                       o << '\n';
                       for (std::size_t i = 0; i < z.n_stocks(); ++i) {
                         for (std::size_t t = 0; t < z.n_days(); ++t) {
                           o << z.stock_ids[i] << ',' << z.calendar[t];
                           for (std::size_t f = 0; f < z.n_features(); ++f) {
                             const double v = z.at(i, t, f);
                             o << ',' << (std::isfinite(v) ? format_double(v) : std::string());
                           }
                           o << '\n';
                         }
                       }
                     });
      }
      lab.segment = cut.segments[k];
      labelings.push_back(std::move(lab));
    }
    write_stream(out / "labels.csv", [&](std::ostream& o) { write_labeling_csv(o, labelings); });
    json manifest;
    manifest["segment_length"] = c.segment.length;
    manifest["discarded_days"] = cut.discarded_days;
    manifest["segments"] = splits;
    write_text(out / "splits.json", manifest.dump(2) + "\n");
    return 0;
  });
  for (const auto& w : diag.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return out;
}

fs::path cmd_characterize(const RunConfig& c) {
  const PricePanel full = load_data(c);
  const fs::path out = ensure_dir(c.output.dir / "characteristics");
  Diagnostics diag;
  stage("characterize", [&] {
    const auto cut = cut_segments(full.n_days(), c.segment.length);
    CharacteristicsOptions opts = c.characteristics;
    opts.split_label = std::to_string(c.split.train) + ":" + std::to_string(c.split.valid) + ":" +
                       std::to_string(c.split.test);
    opts.skip_empty = true;
    // Pooled over segments: member-weighted means.
    std::map<MovementPattern, std::vector<CharacteristicsRow>> per_pattern;
    json segments = json::array();
    for (std::size_t k = 0; k < cut.segments.size(); ++k) {
      const PricePanel seg = full.slice_days(cut.segments[k]);
      const ReturnPanel returns = compute_returns(seg);
      const auto lab = classify_segment(returns, seg.stock_ids(), Segment{0, seg.n_days()}, c.segment.options);
      const auto rows = pattern_aggregates(seg, returns, lab, opts, &diag);
      segments.push_back(json::parse(characteristics_to_json(rows)));
      for (const auto& r : rows) per_pattern[r.pattern].push_back(r);
    }
    std::vector<CharacteristicsRow> pooled;
    for (MovementPattern p : kAllPatterns) {
      CharacteristicsRow row;
      row.pattern = p;
      row.split = opts.split_label;
      double w = 0.0;
      for (const auto& r : per_pattern[p]) {
        if (r.members == 0) continue;
        const double m = static_cast<double>(r.members);
        row.non_stationarity += m * r.non_stationarity;
        row.autocorrelation += m * r.autocorrelation;
        row.forecastability += m * r.forecastability;
        row.members += r.members;
        w += m;
      }
      if (w > 0) {
        row.non_stationarity /= w;
        row.autocorrelation /= w;
        row.forecastability /= w;
      } else {
        row.non_stationarity = row.autocorrelation = row.forecastability = std::nan("");
      }
      pooled.push_back(row);
    }
    write_stream(out / "characteristics.csv", [&](std::ostream& o) { write_characteristics_csv(o, pooled); });
    json j;
    j["pooled"] = json::parse(characteristics_to_json(pooled));
    j["segments"] = segments;
    write_text(out / "characteristics.json", j.dump(2) + "\n");
    return 0;
  });
  for (const auto& w : diag.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return out;
}

RunResult cmd_run(const RunConfig& c) {
  if (c.predictors.empty()) throw ConfigError("config field 'predictors': at least one predictor is required");
  const PricePanel full = load_data(c);
  Diagnostics diag;
  const RunDataset ds = prepare_dataset(c, full, &diag);
  const auto models = train_models(c, ds);

  std::vector<ModelResult> results(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) results[k] = evaluate_model(c, ds, models[k]);

  RunResult rr;
  ensure_dir(c.output.dir);
  const fs::path tmp = unique_dir(c.output.dir, ".tmp-run-" + timestamp());
  ensure_dir(tmp);
  try {
    RunConfig snapshot = c;
    if (c.data.source != DataSource::Synth) {
      // Self-contained: the archive carries its own copy of the input panel.
      save_panel_binary(full, tmp / "panel.fbp");
      snapshot.data.source = DataSource::Binary;
      snapshot.data.path = "panel.fbp";
    }
    snapshot.output.dir = ".";
    write_text(tmp / "config.json", run_config_to_json(snapshot));

    CharacteristicsOptions opts = c.characteristics;
    opts.skip_empty = true;
    opts.split_label = std::to_string(c.split.train) + ":" + std::to_string(c.split.valid) + ":" +
                       std::to_string(c.split.test);
    const auto rows = stage("characterize", [&] {
      const ReturnPanel seg_returns = compute_returns(ds.segment_panel);
      return pattern_aggregates(ds.segment_panel, seg_returns, ds.labeling, opts, &diag);
    });
    write_stream(tmp / "characteristics.csv", [&](std::ostream& o) { write_characteristics_csv(o, rows); });
    write_stream(tmp / "labels.csv", [&](std::ostream& o) {
      write_labeling_csv(o, std::span<const SegmentLabeling>(&ds.labeling, 1));
    });

    for (std::size_t k = 0; k < results.size(); ++k) {
      const auto& r = results[k];
      const std::string name = c.predictors[k].label();
      const fs::path dir = ensure_dir(tmp / "models" / sanitize(name));
      write_text(dir / "model.json", model_to_json(r.model));
      write_stream(dir / "training_log.csv", [&](std::ostream& o) { write_training_log_csv(o, r.model); });
      write_stream(dir / "predictions.csv",
                   [&](std::ostream& o) { write_predictions_csv(o, r.scores, ds.panel, ds.split.test); });
      write_stream(dir / "trades.csv", [&](std::ostream& o) { write_trades_csv(o, r.portfolio.trades, ds.panel); });
      write_stream(dir / "equity.csv", [&](std::ostream& o) { write_equity_csv(o, r.portfolio, ds.panel); });
      write_text(dir / "metrics.json", metrics_to_json(r.metrics, c.output.include_series));
      rr.model_names.push_back(name);
      rr.metrics[name] = r.metrics;
    }
    write_text(tmp / "metrics.json", metrics_summary_json(rr.model_names, rr.metrics));

    write_stream(tmp / "cumulative_returns.csv", [&](std::ostream& o) {
      o << "day,date";
      for (const auto& n : rr.model_names) o << ',' << n;
      o << ",benchmark\n";
      double bench = 1.0;
      const auto& days = results.front().portfolio.days;
      for (std::size_t d = 0; d < days.size(); ++d) {
        if (d > 0) bench *= 1.0 + results.front().benchmark[d - 1];
        o << days[d] << ',' << ds.panel.calendar()[days[d]];
        for (const auto& r : results) {
          o << ',' << format_double(r.portfolio.equity_curve[d] / c.backtest.initial_capital - 1.0);
        }
        o << ',' << format_double(bench - 1.0) << '\n';
      }
    });

    json manifest;
    manifest["format"] = kArchiveFormat;
    manifest["created"] = timestamp();
    manifest["models"] = rr.model_names;
    manifest["test_first_date"] = ds.panel.calendar()[ds.split.test.begin];
    manifest["test_last_date"] = ds.panel.calendar()[ds.split.test.end - 1];
    manifest["warnings"] = diag.warnings;
    write_text(tmp / "archive.json", manifest.dump(2) + "\n");

    rr.archive = unique_dir(c.output.dir, "run-" + timestamp());
    fs::rename(tmp, rr.archive);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  for (const auto& w : diag.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return rr;
}

namespace {

struct CurveTable {
  std::vector<std::string> dates;
  std::map<std::string, std::vector<std::string>> columns;
};

CurveTable read_curves(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  CurveTable t;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (line_no == 1) {
      if (cells.size() < 3 || cells[0] != "day" || cells[1] != "date") {
        throw ArchiveError(path.string() + ": unexpected cumulative-return header");
      }
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) throw ArchiveError(path.string() + ": ragged row " + std::to_string(line_no));
    t.dates.push_back(cells[1]);
    for (std::size_t k = 2; k < cells.size(); ++k) t.columns[header[k]].push_back(cells[k]);
  }
  return t;
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string md_cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

fs::path cmd_report(const std::vector<fs::path>& archives, const fs::path& out_dir) {
  if (archives.empty()) throw ConfigError("report needs at least one archive");
  struct Row {
    std::string model;
    MetricsReport m;
  };
  std::vector<Row> rows;
  std::vector<std::string> dates;
  std::vector<std::pair<std::string, std::vector<std::string>>> curves;
  std::vector<std::string> bench;
  std::set<std::string> seen;
  for (const auto& a : archives) {
    const fs::path manifest_path = a / "archive.json";
    if (!fs::exists(manifest_path)) throw ArchiveError(a.string() + ": not a run archive (archive.json missing)");
    json manifest;
    try {
      manifest = json::parse(read_text(manifest_path));
    } catch (const json::exception& e) {
      throw ArchiveError(a.string() + ": unreadable archive.json: " + e.what());
    }
    if (!manifest.contains("format") || manifest["format"] != kArchiveFormat) {
      throw ArchiveError(a.string() + ": archive format mismatch (expected " + kArchiveFormat + ")");
    }
    json summary;
    try {
      summary = json::parse(read_text(a / "metrics.json"));
    } catch (const json::exception& e) {
      throw ArchiveError(a.string() + ": unreadable metrics.json: " + e.what());
    }
    const CurveTable curve = read_curves(a / "cumulative_returns.csv");
    if (dates.empty()) {
      dates = curve.dates;
      bench = curve.columns.count("benchmark") ? curve.columns.at("benchmark") : std::vector<std::string>{};
    } else if (curve.dates != dates) {
      throw ArchiveError(a.string() + ": test period differs from the first archive");
    }
    for (const auto& [name, value] : summary.items()) {
      std::string label = name;
      for (int k = 2; seen.count(label); ++k) label = name + "#" + std::to_string(k);
      seen.insert(label);
      rows.push_back({label, metrics_from_json(value.dump())});
      const auto it = curve.columns.find(name);
      if (it == curve.columns.end()) throw ArchiveError(a.string() + ": no cumulative returns for " + name);
      curves.emplace_back(label, it->second);
    }
  }

  ensure_dir(out_dir);
  write_stream(out_dir / "report.csv", [&](std::ostream& o) {
    o << "model";
    for (const char* col : kMetricColumns) o << ',' << col;
    o << '\n';
    for (const auto& r : rows) {
      const auto& m = r.m;
      o << r.model;
      for (const auto* v : {&m.mse, &m.mae, &m.ic, &m.icir, &m.rank_ic, &m.rank_icir, &m.arr, &m.avol, &m.mdd, &m.asr,
                            &m.ir}) {
        o << ',' << cell(*v);
      }
      o << '\n';
    }
  });
  write_stream(out_dir / "report.md", [&](std::ostream& o) {
    o << "| Model |";
    for (const char* col : kMetricColumns) o << ' ' << col << " |";
    o << "\n|---|";
    for (std::size_t k = 0; k < std::size(kMetricColumns); ++k) o << "---:|";
    o << '\n';
    for (const auto& r : rows) {
      const auto& m = r.m;
      o << "| " << r.model << " |";
      for (const auto* v : {&m.mse, &m.mae, &m.ic, &m.icir, &m.rank_ic, &m.rank_icir, &m.arr, &m.avol, &m.mdd, &m.asr,
                            &m.ir}) {
        o << ' ' << md_cell(*v) << " |";
      }
      o << '\n';
    }
  });
  write_stream(out_dir / "cumulative_returns.csv", [&](std::ostream& o) {
    o << "date";
    for (const auto& [name, col] : curves) o << ',' << name;
    if (!bench.empty()) o << ",benchmark";
    o << '\n';
    for (std::size_t d = 0; d < dates.size(); ++d) {
      o << dates[d];
      for (const auto& [name, col] : curves) o << ',' << col[d];
      if (!bench.empty()) o << ',' << bench[d];
      o << '\n';
    }
  });
  return out_dir;
}

}  // namespace finbench
