#include "finbench/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "finbench/panel_io.hpp"

namespace finbench {

namespace {

bool can_trade(const DayMarket& market, std::size_t stock) {
  return stock < market.close.size() && std::isfinite(market.close[stock]) && market.close[stock] > 0.0 &&
         (market.tradable.empty() || market.tradable[stock] != 0);
}

void refresh_prices(PortfolioState& state, const DayMarket& market) {
  for (const auto& [stock, shares] : state.holdings) {
    if (std::isfinite(market.close[stock])) {
      state.last_price[stock] = market.close[stock];
    } else {
      state.diagnostics.warn("day " + std::to_string(market.day) + ": missing price for held stock " +
                             std::to_string(stock) + "; position frozen");
    }
  }
}

Trade execute(PortfolioState& state, std::size_t day, std::size_t stock, Side side, double notional, double price,
              double fee_rate) {
  Trade t;
  t.day = day;
  t.stock = stock;
  t.side = side;
  t.price = price;
  t.notional = notional;
  t.shares = notional / price;
  t.fee = fee_rate * notional;
  if (side == Side::Buy) {
    state.holdings[stock] += t.shares;
    state.last_price[stock] = price;
    state.cash -= notional + t.fee;
  } else {
    auto it = state.holdings.find(stock);
    const double held = it->second;
    // Selling the full position removes it exactly.
    if (t.shares >= held * (1.0 - 1e-12)) {
      t.shares = held;
      t.notional = held * price;
      t.fee = fee_rate * t.notional;
      state.holdings.erase(it);
      state.last_price.erase(stock);
    } else {
      it->second -= t.shares;
    }
    state.cash += t.notional - t.fee;
  }
  state.fees_paid += t.fee;
  state.traded_notional += t.notional;
  state.trades.push_back(t);
  return t;
}

// Brings the tradable part of the book to equal weight on `targets`;
// non-tradable holdings stay as they are.
std::vector<Trade> rebalance_equal_weight(PortfolioState& state, const std::vector<std::size_t>& targets,
                                          const DayMarket& market, double fee_rate, double dust) {
  std::vector<Trade> out;
  std::map<std::size_t, double> current;  // tradable holdings by value
  double pool = state.cash;
  for (const auto& [stock, shares] : state.holdings) {
    if (can_trade(market, stock)) {
      current[stock] = shares * market.close[stock];
      pool += current[stock];
    }
  }
  const std::set<std::size_t> target_set(targets.begin(), targets.end());
  const double k = static_cast<double>(targets.size());

  // V = pool - fee * sum |target - current|; contraction with factor <= fee.
  double invest = pool;
  if (!targets.empty()) {
    for (int iter = 0; iter < 100; ++iter) {
      double turnover = 0.0;
      for (std::size_t s : targets) {
        const auto it = current.find(s);
        turnover += std::abs(invest / k - (it == current.end() ? 0.0 : it->second));
      }
      for (const auto& [s, v] : current) {
        if (!target_set.count(s)) turnover += v;
      }
      const double next = pool - fee_rate * turnover;
      const bool done = std::abs(next - invest) <= 1e-15 * std::max(1.0, pool);
      invest = next;
      if (done) break;
    }
  }
  const double per_name = targets.empty() ? 0.0 : std::max(0.0, invest) / k;

  for (const auto& [s, v] : current) {
    const double goal = target_set.count(s) ? per_name : 0.0;
    if (v - goal > dust || (goal == 0.0 && v > 0.0)) {
      out.push_back(execute(state, market.day, s, Side::Sell, v - goal, market.close[s], fee_rate));
    }
  }
  std::vector<std::pair<std::size_t, double>> buys;
  double cost = 0.0;
  for (std::size_t s : targets) {
    const auto it = current.find(s);
    const double have = it == current.end() ? 0.0 : it->second;
    if (per_name - have > dust) {
      buys.emplace_back(s, per_name - have);
      cost += (per_name - have) * (1.0 + fee_rate);
    }
  }
  const double scale = cost > state.cash ? std::max(0.0, state.cash) / cost : 1.0;
  for (const auto& [s, q] : buys) {
    if (q * scale <= dust) {
      state.diagnostics.warn("day " + std::to_string(market.day) + ": insufficient cash to buy stock " +
                             std::to_string(s));
      continue;
    }
    out.push_back(execute(state, market.day, s, Side::Buy, q * scale, market.close[s], fee_rate));
  }
  return out;
}

double dust_threshold(const PortfolioState& state) { return 1e-10 * std::max(1.0, std::abs(state.equity())); }

}  // namespace

std::string_view to_string(Strategy s) { return s == Strategy::TopK ? "topk" : "topk_drop"; }

Strategy parse_strategy(std::string_view name) {
  if (name == "topk") return Strategy::TopK;
  if (name == "topk_drop") return Strategy::TopKDrop;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected topk or topk_drop)");
}

void BacktestConfig::validate(std::size_t n_stocks) const {
  if (m < 1 || n < 1 || n > m || m > n_stocks) {
    throw ConfigError("backtest requires 1 <= n <= m <= N (n=" + std::to_string(n) + ", m=" + std::to_string(m) +
                      ", N=" + std::to_string(n_stocks) + ")");
  }
  if (!(fee_rate >= 0.0 && fee_rate < 0.05)) throw ConfigError("fee_rate must lie in [0, 0.05)");
  if (!(initial_capital > 0.0)) throw ConfigError("initial_capital must be positive");
}

double PortfolioState::positions_value() const {
  double v = 0.0;
  for (const auto& [stock, shares] : holdings) {
    const auto it = last_price.find(stock);
    if (it != last_price.end()) v += shares * it->second;
  }
  return v;
}

std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isfinite(scores[i])) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

Selection select_topk(std::span<const double> scores, std::span<const std::uint8_t> tradable, std::size_t m) {
  Selection sel;
  for (std::size_t i : rank_order(scores)) {
    if (sel.stocks.size() == m) break;
    if (!tradable.empty() && tradable[i] == 0) continue;
    sel.stocks.push_back(i);
  }
  sel.shortfall = sel.stocks.size() < m;
  return sel;
}

PortfolioState initial_state(const BacktestConfig& config) {
  PortfolioState s;
  s.cash = config.initial_capital;
  return s;
}

std::vector<Trade> topk_drop_step(PortfolioState& state, std::span<const double> scores, const DayMarket& market,
                                  const BacktestConfig& config) {
  refresh_prices(state, market);
  std::vector<std::uint8_t> ok(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) ok[i] = can_trade(market, i) ? 1 : 0;
  const auto target = select_topk(scores, ok, config.m).stocks;
  const std::set<std::size_t> target_set(target.begin(), target.end());

  const auto order = rank_order(scores);
  std::vector<std::size_t> rank(scores.size(), scores.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

  // Held names outside the target, worst first (unscored count as worst).
  std::vector<std::size_t> outside;
  for (const auto& [stock, shares] : state.holdings) {
    if (!target_set.count(stock)) outside.push_back(stock);
  }
  std::stable_sort(outside.begin(), outside.end(), [&](std::size_t a, std::size_t b) { return rank[a] > rank[b]; });

  std::vector<Trade> out;
  const std::size_t candidates = std::min(config.n, outside.size());
  for (std::size_t k = 0; k < candidates; ++k) {
    const std::size_t s = outside[k];
    if (!can_trade(market, s)) {
      state.diagnostics.warn("day " + std::to_string(market.day) + ": sell of stock " + std::to_string(s) +
                             " blocked (not tradable)");
      continue;
    }
    const double value = state.holdings.at(s) * market.close[s];
    out.push_back(execute(state, market.day, s, Side::Sell, value, market.close[s], config.fee_rate));
  }

  const std::size_t slots = config.m > state.holdings.size() ? config.m - state.holdings.size() : 0;
  std::vector<std::size_t> buys;
  for (std::size_t s : target) {
    if (buys.size() == slots) break;
    if (!state.holdings.count(s)) buys.push_back(s);
  }
  if (config.reequalize) {
    std::vector<std::size_t> book;
    for (const auto& [stock, shares] : state.holdings) {
      if (can_trade(market, stock)) book.push_back(stock);
    }
    book.insert(book.end(), buys.begin(), buys.end());
    const auto more = rebalance_equal_weight(state, book, market, config.fee_rate, dust_threshold(state));
    out.insert(out.end(), more.begin(), more.end());
    return out;
  }
  if (!buys.empty()) {
    const double per_name = state.cash / static_cast<double>(buys.size()) / (1.0 + config.fee_rate);
    for (std::size_t s : buys) {
      if (!(per_name > dust_threshold(state))) {
        state.diagnostics.warn("day " + std::to_string(market.day) + ": insufficient cash to buy stock " +
                               std::to_string(s));
        continue;
      }
      out.push_back(execute(state, market.day, s, Side::Buy, per_name, market.close[s], config.fee_rate));
    }
  }
  if (state.cash < 0.0 && state.cash > -1e-9 * std::max(1.0, state.equity())) state.cash = 0.0;
  return out;
}

std::vector<Trade> topk_step(PortfolioState& state, std::span<const double> scores, const DayMarket& market,
                             const BacktestConfig& config) {
  refresh_prices(state, market);
  std::size_t frozen = 0;
  for (const auto& [stock, shares] : state.holdings) {
    if (!can_trade(market, stock)) ++frozen;
  }
  std::vector<std::uint8_t> ok(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) ok[i] = can_trade(market, i) ? 1 : 0;
  const std::size_t room = config.m > frozen ? config.m - frozen : 0;
  const auto target = select_topk(scores, ok, room).stocks;
  auto out = rebalance_equal_weight(state, target, market, config.fee_rate, dust_threshold(state));
  if (state.cash < 0.0 && state.cash > -1e-9 * std::max(1.0, state.equity())) state.cash = 0.0;
  return out;
}

namespace {

DayMarket market_of(const PricePanel& panel, std::size_t day, std::vector<double>& close,
                    std::vector<std::uint8_t>& tradable) {
  close.resize(panel.n_stocks());
  tradable.resize(panel.n_stocks());
  for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
    close[i] = panel.close(i, day);
    tradable[i] = panel.tradable(i, day) ? 1 : 0;
  }
  return DayMarket{day, close, tradable};
}

void record_day(PortfolioState& state, std::size_t day, double pre_trade_equity, double traded) {
  const double equity = state.equity();
  if (!state.equity_curve.empty()) state.daily_returns.push_back(equity / state.equity_curve.back() - 1.0);
  state.days.push_back(day);
  state.equity_curve.push_back(equity);
  state.cash_curve.push_back(state.cash);
  state.turnover.push_back(pre_trade_equity > 0.0 ? traded / pre_trade_equity : 0.0);
}

}  // namespace

PortfolioState run_backtest(const ScorePanel& scores, const PricePanel& panel, const BacktestConfig& config,
                            DayRange test) {
  config.validate(panel.n_stocks());
  if (test.end > panel.n_days() || test.size() < 2) throw DataError("backtest range must cover >= 2 panel days");
  if (scores.n_stocks() != panel.n_stocks() || scores.n_days() != panel.n_days()) {
    throw DataError("score panel shape differs from price panel");
  }
  PortfolioState state = initial_state(config);
  std::vector<double> close;
  std::vector<std::uint8_t> tradable;
  for (std::size_t t = test.begin; t < test.end; ++t) {
    const auto market = market_of(panel, t, close, tradable);
    refresh_prices(state, market);
    const double pre = state.equity();
    double traded = 0.0;
    if (t + 1 < test.end) {
      const auto day_scores = scores.day_slice(t);
      const auto trades = config.strategy == Strategy::TopK ? topk_step(state, day_scores, market, config)
                                                            : topk_drop_step(state, day_scores, market, config);
      for (const auto& tr : trades) traded += tr.notional;
    }
    record_day(state, t, pre, traded);
  }
  return state;
}

PortfolioState replay_trades(std::span<const Trade> trades, const PricePanel& panel, double fee_rate,
                             double initial_capital, DayRange test) {
  PortfolioState state;
  state.cash = initial_capital;
  std::vector<double> close;
  std::vector<std::uint8_t> tradable;
  std::size_t k = 0;
  for (std::size_t t = test.begin; t < test.end; ++t) {
    const auto market = market_of(panel, t, close, tradable);
    refresh_prices(state, market);
    const double pre = state.equity();
    double traded = 0.0;
    for (; k < trades.size() && trades[k].day == t; ++k) {
      const auto& tr = trades[k];
      const double notional = tr.shares * tr.price;
      const double fee = fee_rate * notional;
      if (tr.side == Side::Buy) {
        state.holdings[tr.stock] += tr.shares;
        state.last_price[tr.stock] = tr.price;
        state.cash -= notional + fee;
      } else {
        auto it = state.holdings.find(tr.stock);
        if (it == state.holdings.end()) throw DataError("replay: sell of a stock that is not held");
        it->second -= tr.shares;
        if (std::abs(it->second) <= 1e-12 * tr.shares) {
          state.holdings.erase(it);
          state.last_price.erase(tr.stock);
        }
        state.cash += notional - fee;
      }
      state.fees_paid += fee;
      state.traded_notional += notional;
      traded += notional;
      Trade copy = tr;
      copy.notional = notional;
      copy.fee = fee;
      state.trades.push_back(copy);
    }
    record_day(state, t, pre, traded);
  }
  return state;
}

std::vector<double> equal_weight_benchmark(const PricePanel& panel, const ReturnPanel& returns, DayRange test) {
  std::vector<double> out;
  for (std::size_t t = test.begin; t + 1 < test.end; ++t) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
      if (panel.tradable(i, t) && returns.valid(i, t + 1)) sum += returns.value(i, t + 1), ++count;
    }
    out.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  return out;
}

std::vector<double> benchmark_returns(const BacktestConfig& config, const PricePanel& panel,
                                      const ReturnPanel& returns, DayRange test) {
  if (config.benchmark == BenchmarkKind::EqualWeightUniverse) return equal_weight_benchmark(panel, returns, test);
  if (config.external_benchmark.size() + 1 != test.size()) {
    throw DataError("external benchmark must have one return per backtest day after the first");
  }
  return config.external_benchmark;
}

void write_equity_csv(std::ostream& out, const PortfolioState& state, const PricePanel& panel) {
  out << "day,date,equity,cash,daily_return,turnover\n";
  for (std::size_t k = 0; k < state.days.size(); ++k) {
    out << state.days[k] << ',' << panel.calendar()[state.days[k]] << ',' << format_double(state.equity_curve[k])
        << ',' << format_double(state.cash_curve[k]) << ','
        << (k == 0 ? std::string() : format_double(state.daily_returns[k - 1])) << ','
        << format_double(state.turnover[k]) << '\n';
  }
}

void write_trades_csv(std::ostream& out, std::span<const Trade> trades, const PricePanel& panel) {
  out << "day,date,stock_id,side,shares,price,notional,fee\n";
  for (const auto& t : trades) {
    out << t.day << ',' << panel.calendar()[t.day] << ',' << panel.stock_ids()[t.stock] << ','
        << (t.side == Side::Buy ? "buy" : "sell") << ',' << format_double(t.shares) << ',' << format_double(t.price)
        << ',' << format_double(t.notional) << ',' << format_double(t.fee) << '\n';
  }
}

}  // namespace finbench
