#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finbench/error.hpp"
#include "finbench/panel.hpp"
#include "finbench/segmenter.hpp"

namespace finbench {

enum class AdfTrend { Constant, ConstantTrend };

// Dickey-Fuller regression
//   ds_t = alpha + beta * t + gamma * s_{t-1} + sum_j delta_j ds_{t-j} + e_t
// fitted by OLS; statistic = gamma_hat / se(gamma_hat).
struct AdfResult {
  double statistic = 0.0;
  double gamma_hat = 0.0;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;  // 0 when the trend term is absent
  std::size_t lags_used = 0;
  std::size_t nobs = 0;
  double residual_variance = 0.0;
};

// floor(12 * (n / 100)^(1/4))
std::size_t schwert_lag(std::size_t n);

// Throws NumericError on a rank-deficient design (e.g. constant input) and
// DataError when the series is shorter than lags + 10 or not finite.
AdfResult adf_statistic(std::span<const double> series, std::optional<std::size_t> lags = std::nullopt,
                        AdfTrend trend = AdfTrend::Constant);

// sum_{t<L-k} (s_t - m)(s_{t+k} - m) / sum_t (s_t - m)^2
double autocorrelation(std::span<const double> series, std::size_t lag);

enum class EntropyNormalization {
  LogBins,  // H / log(M), M = number of positive-frequency bins
  Log2Pi,   // H / log(2 pi), the continuous-density normalization
};

struct ForecastabilityOptions {
  EntropyNormalization normalization = EntropyNormalization::LogBins;
};

// 1 - H(p) / norm, with p the mean-removed one-sided periodogram normalized to
// sum to 1 and H the Shannon entropy (natural log); clipped to [0, 1]. A
// zero-power series yields 0 and a warning.
double forecastability(std::span<const double> series, const ForecastabilityOptions& options = {},
                       Diagnostics* diagnostics = nullptr);

struct CharacteristicsOptions {
  std::optional<std::size_t> adf_lags;  // Schwert rule when unset
  AdfTrend adf_trend = AdfTrend::Constant;
  std::size_t autocorr_lag = 1;
  ForecastabilityOptions forecastability;
  bool skip_empty = false;  // otherwise an empty cohort is an error
  std::string split_label = "7:1:2";
};

struct StockCharacteristics {
  std::optional<double> adf;  // on close prices
  std::optional<double> autocorr;  // on returns
  std::optional<double> forecastability;  // on returns
};

StockCharacteristics characterize_stock(std::span<const double> closes, std::span<const double> returns,
                                        const CharacteristicsOptions& options = {},
                                        Diagnostics* diagnostics = nullptr);

struct CharacteristicsRow {
  MovementPattern pattern = MovementPattern::Uptrend;
  std::size_t members = 0;
  double non_stationarity = 0.0;  // mean ADF statistic
  double autocorrelation = 0.0;
  double forecastability = 0.0;
  std::string split;
};

// One row per pattern (Uptrend, Downtrend, Volatile, Extreme), each the mean
// over member stocks of the per-stock statistics on the labeling's segment.
std::vector<CharacteristicsRow> pattern_aggregates(const PricePanel& panel, const ReturnPanel& returns,
                                                   const SegmentLabeling& labeling,
                                                   const CharacteristicsOptions& options = {},
                                                   Diagnostics* diagnostics = nullptr);

// Columns: pattern,non_stationarity,autocorrelation,forecastability,split,members
void write_characteristics_csv(std::ostream& out, std::span<const CharacteristicsRow> rows);
std::string characteristics_to_json(std::span<const CharacteristicsRow> rows);

}  // namespace finbench
