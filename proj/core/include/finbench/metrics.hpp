#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finbench/panel.hpp"

namespace finbench {

inline constexpr double kTradingDaysPerYear = 252.0;

enum class CorrelationKind { Pearson, Spearman };

// Cross-sectional: one correlation across stocks per day, averaged over days.
// PerStockTemporal: one correlation over days per stock, averaged over stocks.
enum class IcMode { CrossSectional, PerStockTemporal };

std::string_view to_string(IcMode mode);
IcMode parse_ic_mode(std::string_view name);

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);
// NaN when either side has zero variance or fewer than 2 values.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct DailySeries {
  std::vector<std::size_t> days;
  std::vector<double> values;  // NaN where masked
  std::vector<std::uint8_t> valid;

  std::vector<double> valid_values() const;
};

// Scores of day t against realized returns of day t+1, for every t in `days`
// with t+1 inside the panel. Days with fewer than 3 joint observations or zero
// cross-sectional variance are masked.
DailySeries daily_ic_series(const ScorePanel& scores, const ReturnPanel& returns, CorrelationKind kind,
                            DayRange days);

// Literal per-stock temporal reading of the IC formula, same t -> t+1
// alignment. Stocks with fewer than 3 pairs or zero variance are skipped.
std::vector<double> per_stock_ic_values(const ScorePanel& scores, const ReturnPanel& returns, CorrelationKind kind,
                                        DayRange days);
std::optional<double> per_stock_temporal_ic(const ScorePanel& scores, const ReturnPanel& returns,
                                            CorrelationKind kind, DayRange days);

// mean / sample std (n - 1), no annualization. NaN entries are ignored.
// Throws NumericError with fewer than 2 values or zero std.
double information_ratio_of(std::span<const double> series);

struct PortfolioMetrics {
  double arr = 0.0;
  double avol = 0.0;
  double mdd = 0.0;
  std::optional<double> asr;
  std::optional<double> ir;
};

// Negative of the largest relative peak-to-trough decline of an equity path;
// 0 for a non-decreasing path.
double max_drawdown(std::span<const double> equity);

// ARR = (1 + total)^(252/n) - 1, AVol = sqrt(252 * Var(R_p)), MDD on the
// compounded curve starting at 1, ASR = ARR / AVol, IR = mean(a) / std(a)
// with a = R_p - R_b. An empty benchmark leaves IR unset.
PortfolioMetrics portfolio_metrics(std::span<const double> portfolio_returns,
                                   std::span<const double> benchmark_returns);

struct ErrorMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

// Over every jointly valid (score at t, return at t+1) cell with t in `days`.
ErrorMetrics error_metrics(const ScorePanel& scores, const ReturnPanel& returns, DayRange days);

struct MetricsReport {
  std::optional<double> mse, mae;
  std::optional<double> ic, icir, rank_ic, rank_icir;
  std::optional<double> arr, avol, mdd, asr, ir;
  IcMode ic_mode = IcMode::CrossSectional;
  DailySeries ic_series;
  DailySeries rank_ic_series;
};

struct EvaluationInputs {
  const ScorePanel& scores;
  const ReturnPanel& returns;
  DayRange days;
  std::span<const double> portfolio_returns;
  std::span<const double> benchmark_returns;
  IcMode ic_mode = IcMode::CrossSectional;
};

// All eleven metrics; undefined values (zero variance, no data) stay unset.
MetricsReport evaluate(const EvaluationInputs& inputs);

// Keys: MSE, MAE, IC, ICIR, RankIC, RankICIR, ARR, AVol, MDD, ASR, IR, plus
// ic_mode and the per-day audit series. Undefined metrics are null.
std::string metrics_to_json(const MetricsReport& report, bool include_series = true);
MetricsReport metrics_from_json(const std::string& text);

inline constexpr const char* kMetricColumns[] = {"MSE",      "MAE", "IC",   "ICIR", "RankIC", "RankICIR",
                                                 "ARR",      "AVol", "MDD", "ASR",  "IR"};

}  // namespace finbench
