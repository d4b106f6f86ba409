#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "finbench/backtest.hpp"
#include "finbench/characteristics.hpp"
#include "finbench/panel.hpp"
#include "finbench/synth.hpp"

namespace fbtest {

using namespace finbench;

std::filesystem::path data_path(const std::string& name);
std::vector<double> read_series(const std::filesystem::path& path);

// OHLC all equal to the close, volume 1000. closes[stock][day].
PricePanel panel_from_closes(const std::vector<std::vector<double>>& closes,
                             const std::vector<std::vector<std::uint8_t>>& tradable = {});

// n stocks of one regime, business-day calendar.
PricePanel regime_panel(std::size_t n_stocks, std::size_t n_days, const RegimeSpec& regime, std::uint64_t seed);

// Mean-reverting: AR(1) -0.3 returns, no drift. Trending: per-stock drift
// N(0, 0.002^2) with AR(1) +0.1.
PricePanel mean_reverting_panel(std::size_t n_stocks, std::size_t n_days, std::uint64_t seed);
PricePanel trending_panel(std::size_t n_stocks, std::size_t n_days, std::uint64_t seed);

// Every cell on or after first_day replaced by a sentinel price (OHLC equal)
// and sentinel volume; days before are copied bit for bit.
PricePanel poison_after(const PricePanel& panel, std::size_t first_day, double sentinel = 1.0e6);

ScorePanel random_scores(std::size_t n_stocks, std::size_t n_days, std::uint64_t seed);
// score(i, t) = r_i(t+1): knows tomorrow.
ScorePanel foresight_scores(const ReturnPanel& returns);

std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sd = 1.0);
std::vector<double> random_walk(std::size_t n, std::uint64_t seed);
std::vector<double> ar1_series(std::size_t n, double phi, std::uint64_t seed);
std::vector<double> sinusoid(std::size_t n, double cycles, double amplitude = 1.0, double phase = 0.3);

// Dickey-Fuller t statistic by normal equations and Gauss-Jordan elimination
// in long double; no Eigen. Independent of the library implementation.
double adf_oracle(const std::vector<double>& s, std::size_t lags, bool trend);

// Equity per day rebuilt from a trade log: cash plus shares at the day's
// close (last known close when missing).
std::vector<double> equity_from_trades(const std::vector<Trade>& trades, const PricePanel& panel, DayRange days,
                                       double initial_capital);

class TempDir {
 public:
  explicit TempDir(const std::string& stem);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace fbtest
