#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "finbench/error.hpp"
#include "finbench/panel.hpp"

namespace finbench {

enum class Strategy { TopK, TopKDrop };
enum class BenchmarkKind { EqualWeightUniverse, External };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct BacktestConfig {
  Strategy strategy = Strategy::TopKDrop;
  std::size_t m = 30;  // portfolio size
  std::size_t n = 5;   // max replacements per day (TopK-Drop)
  double fee_rate = 0.001;  // on buy and sell notional
  double initial_capital = 1'000'000.0;
  BenchmarkKind benchmark = BenchmarkKind::EqualWeightUniverse;
  // Daily benchmark returns aligned with the portfolio's daily returns.
  std::vector<double> external_benchmark;
  // TopK-Drop: bring every holding back to equal weight after replacements
  // instead of letting retained positions drift.
  bool reequalize = false;

  // Throws ConfigError unless 1 <= n <= m <= n_stocks and 0 <= fee < 0.05.
  void validate(std::size_t n_stocks) const;
};

enum class Side { Buy, Sell };

struct Trade {
  std::size_t day = 0;
  std::size_t stock = 0;
  Side side = Side::Buy;
  double shares = 0.0;
  double price = 0.0;
  double notional = 0.0;
  double fee = 0.0;
};

struct PortfolioState {
  std::map<std::size_t, double> holdings;  // stock index -> shares (fractional)
  double cash = 0.0;
  std::map<std::size_t, double> last_price;  // valuation price of held stocks

  std::vector<std::size_t> days;
  std::vector<double> equity_curve;  // post-trade value at each day's close
  std::vector<double> cash_curve;
  std::vector<double> daily_returns;  // equity[k] / equity[k-1] - 1, k >= 1
  std::vector<double> turnover;  // traded notional / pre-trade equity
  std::vector<Trade> trades;
  double fees_paid = 0.0;
  double traded_notional = 0.0;
  Diagnostics diagnostics;

  double positions_value() const;
  double equity() const { return cash + positions_value(); }
};

// One day's market as seen by a trading step. Missing prices are NaN.
struct DayMarket {
  std::size_t day = 0;
  std::span<const double> close;
  std::span<const std::uint8_t> tradable;
};

// Stocks with a finite score, best first; ties by stock index (= id order).
std::vector<std::size_t> rank_order(std::span<const double> scores);

struct Selection {
  std::vector<std::size_t> stocks;  // best first
  bool shortfall = false;
};

// Top-m scored, tradable stocks; shortfall when fewer than m qualify.
Selection select_topk(std::span<const double> scores, std::span<const std::uint8_t> tradable, std::size_t m);

// Both steps trade at the day's close, append to state.trades and return the
// day's trades. Missing prices of held stocks freeze the position.
std::vector<Trade> topk_drop_step(PortfolioState& state, std::span<const double> scores, const DayMarket& market,
                                  const BacktestConfig& config);
std::vector<Trade> topk_step(PortfolioState& state, std::span<const double> scores, const DayMarket& market,
                             const BacktestConfig& config);

PortfolioState initial_state(const BacktestConfig& config);

// Trades at the close of every day in [begin, end - 1) using that day's
// scores and marks to market at each close. Deterministic.
PortfolioState run_backtest(const ScorePanel& scores, const PricePanel& panel, const BacktestConfig& config,
                            DayRange test);

// Applies a fixed trade list (shares as given) with a different fee rate.
PortfolioState replay_trades(std::span<const Trade> trades, const PricePanel& panel, double fee_rate,
                             double initial_capital, DayRange test);

// Equal-weighted mean of r_{t+1} over stocks tradable on day t, aligned with
// run_backtest's daily_returns.
std::vector<double> equal_weight_benchmark(const PricePanel& panel, const ReturnPanel& returns, DayRange test);
std::vector<double> benchmark_returns(const BacktestConfig& config, const PricePanel& panel,
                                      const ReturnPanel& returns, DayRange test);

// Columns: day,date,equity,cash,daily_return,turnover
void write_equity_csv(std::ostream& out, const PortfolioState& state, const PricePanel& panel);
// Columns: day,date,stock_id,side,shares,price,notional,fee
void write_trades_csv(std::ostream& out, std::span<const Trade> trades, const PricePanel& panel);

}  // namespace finbench
