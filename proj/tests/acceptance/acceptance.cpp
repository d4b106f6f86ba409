// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are the ones the criteria state.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finbench/backtest.hpp"
#include "finbench/characteristics.hpp"
#include "finbench/metrics.hpp"
#include "finbench/panel_io.hpp"
#include "finbench/pipeline.hpp"
#include "finbench/predictors.hpp"
#include "finbench/segmenter.hpp"
#include "finbench/synth.hpp"
#include "fixtures.hpp"

using namespace finbench;
using namespace fbtest;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 ----
Outcome metric_identities() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const PricePanel panel = regime_panel(50, 120, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0, 0, 0.0}, 11);
  const ReturnPanel r = compute_returns(panel);
  const ScorePanel perfect = foresight_scores(r);
  ScorePanel anti(r.n_stocks(), r.n_days());
  for (std::size_t t = 0; t < r.n_days(); ++t) {
    for (std::size_t i = 0; i < r.n_stocks(); ++i) {
      if (perfect.valid(i, t)) anti.set(i, t, -perfect.value(i, t));
    }
  }
  const DayRange days{1, r.n_days() - 1};
  double worst = 0.0;
  std::size_t n_days = 0;
  for (auto kind : {CorrelationKind::Pearson, CorrelationKind::Spearman}) {
    for (const ScorePanel* s : std::initializer_list<const ScorePanel*>{&perfect, &anti}) {
      const double target = s == &perfect ? 1.0 : -1.0;
      const auto series = daily_ic_series(*s, r, kind, days);
      for (std::size_t k = 0; k < series.values.size(); ++k) {
        if (!series.valid[k]) {
          o.check(false, "day " + std::to_string(series.days[k]) + " masked");
          continue;
        }
        worst = std::max(worst, std::abs(series.values[k] - target));
        ++n_days;
      }
    }
  }
  const double secs = seconds_since(t0);
  o.check(worst <= 1e-9, "max |IC - target| = " + fmt(worst));
  o.check(n_days == 4 * days.size(), "expected every day scored");
  o.check(secs < 1.0, "runtime " + fmt(secs) + " s >= 1 s");
  o.note("max deviation " + fmt(worst, 3) + " over " + std::to_string(n_days / 4) + " days, " + fmt(secs, 3) + " s");
  return o;
}

// ---- 2 ----
Outcome mdd_hand_case() {
  Outcome o;
  const std::vector<double> path{1.0, 1.2, 0.9, 1.1};
  const double mdd = max_drawdown(path);
  o.check(mdd == -0.25, "MDD = " + fmt(mdd, 17));
  const std::vector<double> up{1.0, 1.0, 1.05, 1.2, 1.2, 1.3};
  o.check(max_drawdown(up) == 0.0, "monotone MDD = " + fmt(max_drawdown(up), 17));
  o.note("MDD " + fmt(mdd, 17) + ", monotone " + fmt(max_drawdown(up)));
  return o;
}

// ---- 3 ----
Outcome arr_closed_form() {
  Outcome o;
  const std::vector<double> rp(252, 0.001);
  const auto m = portfolio_metrics(rp, {});
  const double expect = std::pow(1.001, 252) - 1.0;
  o.check(std::abs(m.arr - expect) <= 1e-10, "ARR " + fmt(m.arr, 17) + " vs " + fmt(expect, 17));
  o.check(std::abs(m.avol) <= 1e-12, "AVol " + fmt(m.avol));
  o.note("ARR " + fmt(m.arr, 12) + " (|err| " + fmt(std::abs(m.arr - expect), 2) + ")");
  return o;
}

// ---- 4 ----
Outcome topk_drop_protocol() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_stocks = 300, n_days = 201;
  const PricePanel panel = regime_panel(n_stocks, n_days, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0, 0, 0.0}, 4);
  const ScorePanel scores = random_scores(n_stocks, n_days, 404);
  BacktestConfig cfg;  // TopK-Drop, m = 30, n = 5, fee 0.001
  const DayRange range{0, n_days};
  const PortfolioState st = run_backtest(scores, panel, cfg, range);

  // Holdings per trading day from the trade log.
  std::vector<std::set<std::size_t>> held;
  std::set<std::size_t> cur;
  std::size_t k = 0;
  std::size_t max_replace = 0;
  double fee_sum = 0.0, notional_sum = 0.0;
  bool fee_exact = true;
  for (std::size_t t = range.begin; t + 1 < range.end; ++t) {
    std::size_t sells = 0, buys = 0;
    for (; k < st.trades.size() && st.trades[k].day == t; ++k) {
      const auto& tr = st.trades[k];
      if (tr.side == Side::Sell) cur.erase(tr.stock), ++sells;
      else cur.insert(tr.stock), ++buys;
      fee_exact = fee_exact && tr.fee == 0.001 * tr.notional;
      fee_sum += tr.fee;
      notional_sum += tr.notional;
    }
    if (t > range.begin) max_replace = std::max({max_replace, sells, buys});
    held.push_back(cur);
  }
  std::size_t min_overlap = std::numeric_limits<std::size_t>::max();
  std::size_t max_held = 0;
  for (std::size_t d = 1; d < held.size(); ++d) {
    std::size_t common = 0;
    for (auto s : held[d]) common += held[d - 1].count(s);
    min_overlap = std::min(min_overlap, common);
    max_held = std::max(max_held, held[d].size());
  }
  const auto rebuilt = equity_from_trades(st.trades, panel, range, cfg.initial_capital);
  double worst_identity = 0.0;
  for (std::size_t d = 0; d < rebuilt.size(); ++d) {
    worst_identity = std::max(worst_identity, std::abs(rebuilt[d] - st.equity_curve[d]) / st.equity_curve[d]);
  }
  bool no_negative = true;
  for (double c : st.cash_curve) no_negative = no_negative && c >= 0.0;
  const double secs = seconds_since(t0);
  o.check(held.size() == 200, "expected 200 trading days, got " + std::to_string(held.size()));
  o.check(min_overlap >= 25, "min |P^t ∩ P^t-1| = " + std::to_string(min_overlap));
  o.check(max_replace <= 5, "max replacements " + std::to_string(max_replace));
  o.check(max_held <= 30, "held " + std::to_string(max_held) + " > m");
  o.check(fee_exact, "a trade's fee differs from 0.001 x notional");
  o.check(std::abs(fee_sum - 0.001 * notional_sum) <= 1e-12 * fee_sum, "booked fees != 0.001 x traded notional");
  o.check(std::abs(st.fees_paid - fee_sum) <= 1e-12 * fee_sum, "state fee total differs from trade log");
  o.check(worst_identity <= 1e-8, "accounting identity off by " + fmt(worst_identity));
  o.check(no_negative, "negative cash");
  o.check(secs < 5.0, "runtime " + fmt(secs) + " s >= 5 s");
  o.note("min overlap " + std::to_string(min_overlap) + ", max replacements " + std::to_string(max_replace) +
         ", identity err " + fmt(worst_identity, 3) + ", " + fmt(secs, 3) + " s");
  return o;
}

// ---- 5 ----
Outcome fee_consistency() {
  Outcome o;
  const std::size_t n_stocks = 100, n_days = 150;
  const PricePanel panel = regime_panel(n_stocks, n_days, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0, 0, 0.0}, 5);
  const ScorePanel scores = random_scores(n_stocks, n_days, 505);
  const DayRange range{0, n_days};
  double worst = 0.0;
  for (auto strategy : {Strategy::TopKDrop, Strategy::TopK}) {
    BacktestConfig cfg;
    cfg.strategy = strategy;
    cfg.m = 10;
    cfg.n = 2;
    const PortfolioState fee_run = run_backtest(scores, panel, cfg, range);
    // Same trades, same shares, zero fee rate.
    const PortfolioState zero = replay_trades(fee_run.trades, panel, 0.0, cfg.initial_capital, range);
    const PortfolioState again = replay_trades(fee_run.trades, panel, cfg.fee_rate, cfg.initial_capital, range);
    double cum_fee = 0.0;
    std::size_t k = 0;
    for (std::size_t d = 0; d < fee_run.days.size(); ++d) {
      for (; k < fee_run.trades.size() && fee_run.trades[k].day == fee_run.days[d]; ++k) cum_fee += fee_run.trades[k].fee;
      const double lhs = zero.equity_curve[d] - cum_fee;
      worst = std::max(worst, rel_diff(lhs, fee_run.equity_curve[d]));
      worst = std::max(worst, rel_diff(again.equity_curve[d], fee_run.equity_curve[d]));
    }
    // Identical scores force identical trade sequences.
    const PortfolioState rerun = run_backtest(scores, panel, cfg, range);
    o.check(rerun.trades.size() == fee_run.trades.size(), "rerun changed the trade sequence");
  }
  o.check(worst <= 1e-8, "max relative gap " + fmt(worst));
  o.note("max relative gap " + fmt(worst, 3) + " (TopK-Drop and TopK)");
  return o;
}

// ---- 6 ----
Outcome composite_loss_checks() {
  Outcome o;
  const std::vector<double> r{0.01, -0.02, 0.03, 0.0, 0.015};
  o.check(composite_loss(r, r, 5.0) == 0.0, "Y = r loss " + fmt(composite_loss(r, r, 5.0)));
  const double hand = composite_loss(std::vector<double>{1, 2}, std::vector<double>{2, 1}, 5.0);
  o.check(hand == 12.0, "hand case " + fmt(hand, 17));

  std::mt19937_64 rng(606);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  int points = 0;
  while (points < 10) {
    const std::size_t n = 12;
    std::vector<double> y(n), ret(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = z(rng), ret[i] = 0.05 * z(rng);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) min_gap = std::min(min_gap, std::abs(y[i] - y[j]));
    }
    const double h = 1e-6;
    if (min_gap < 100 * h) continue;  // too close to a hinge kink
    ++points;
    const auto g = composite_loss_gradient(y, ret, 5.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto yp = y, ym = y;
      yp[i] += h;
      ym[i] -= h;
      const double fd = (composite_loss(yp, ret, 5.0) - composite_loss(ym, ret, 5.0)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1e-8));
    }
  }
  o.check(worst <= 1e-5, "max FD relative error " + fmt(worst));
  o.note("Y=r -> 0, hand case -> " + fmt(hand) + ", FD rel err " + fmt(worst, 3) + " at 10 points");
  return o;
}

// ---- 7 ----
Outcome characteristics_oracles() {
  Outcome o;
  // Cross-validation against the frozen statsmodels reference and an
  // independent long-double OLS.
  std::ifstream ref_in(data_path("adf_reference.json"));
  const auto ref = nlohmann::json::parse(ref_in);
  double worst_ref = 0.0;
  std::size_t cases = 0;
  for (const auto& c : ref.at("cases")) {
    const auto x = read_series(data_path("adf_" + c.at("series").get<std::string>() + ".txt"));
    const bool ct = c.at("trend") == "ct";
    const auto lags = c.at("lags").get<std::size_t>();
    const double expect = c.at("statistic").get<double>();
    const auto res = adf_statistic(x, lags, ct ? AdfTrend::ConstantTrend : AdfTrend::Constant);
    worst_ref = std::max(worst_ref, std::abs(res.statistic - expect) / std::abs(expect));
    worst_ref = std::max(worst_ref, std::abs(adf_oracle(x, lags, ct) - res.statistic) / std::abs(expect));
    o.check(res.nobs == c.at("nobs").get<std::size_t>(), "nobs mismatch");
    ++cases;
  }
  o.check(cases >= 18, "reference cases found: " + std::to_string(cases));
  o.check(worst_ref <= 1e-8, "ADF vs reference rel err " + fmt(worst_ref));

  const auto wn = white_noise(1000, 7001);
  const double adf_wn = adf_statistic(wn, 1).statistic;
  const double phi_wn = forecastability(wn);
  std::vector<double> rw = wn;
  for (std::size_t t = 1; t < rw.size(); ++t) rw[t] += rw[t - 1];
  const double adf_rw = adf_statistic(rw, 1).statistic;
  const double phi_sin = forecastability(sinusoid(256, 8.0));
  const double tau = autocorrelation(ar1_series(10000, 0.9, 7003), 1);
  o.check(adf_wn < -10.0, "white-noise ADF " + fmt(adf_wn));
  o.check(phi_wn <= 0.1, "white-noise forecastability " + fmt(phi_wn));
  o.check(adf_rw > -2.5, "random-walk ADF " + fmt(adf_rw));
  o.check(phi_sin >= 0.9, "sinusoid forecastability " + fmt(phi_sin));
  o.check(std::abs(tau - 0.9) <= 0.03, "AR(1) autocorrelation " + fmt(tau));
  o.note("ref err " + fmt(worst_ref, 2) + " over " + std::to_string(cases) + " cases; WN ADF " + fmt(adf_wn, 4) +
         ", WN phi " + fmt(phi_wn, 3) + ", RW ADF " + fmt(adf_rw, 4) + ", sin phi " + fmt(phi_sin, 4) + ", tau " +
         fmt(tau, 4));
  return o;
}

// ---- 8 ----
Outcome segmenter_recovery() {
  Outcome o;
  std::size_t trend_total = 0, trend_hit = 0;
  std::size_t jump_total = 0, jump_flagged = 0, calm_total = 0, calm_flagged = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto ds = generate_pattern_panel(10, seed, 250);
    const ReturnPanel r = compute_returns(ds.panel);
    SegmentOptions opts;
    opts.cohort_size = 10;
    const Segment seg{0, 250};
    const auto lab = classify_segment(r, ds.panel.stock_ids(), seg, opts);
    const auto flagged = flag_black_swans(r, seg, opts.z_threshold, opts.mad_fallback_cap);
    const std::set<std::size_t> flag_set(flagged.begin(), flagged.end());
    for (std::size_t i = 0; i < ds.panel.n_stocks(); ++i) {
      const auto& id = ds.panel.stock_ids()[i];
      const auto truth = ds.truth.at(id);
      if (truth == MovementPattern::Uptrend || truth == MovementPattern::Downtrend) {
        ++trend_total;
        const auto it = lab.labels.find(id);
        trend_hit += it != lab.labels.end() && it->second == truth;
      }
      if (truth == MovementPattern::Extreme) {
        ++jump_total;
        jump_flagged += flag_set.count(i);
      } else {
        ++calm_total;
        calm_flagged += flag_set.count(i);
      }
    }
  }
  const double recovery = static_cast<double>(trend_hit) / trend_total;
  const double tp = static_cast<double>(jump_flagged) / jump_total;
  const double fp = static_cast<double>(calm_flagged) / calm_total;
  o.check(recovery >= 0.90, "trend recovery " + fmt(recovery));
  o.check(tp >= 0.95, "black-swan TP " + fmt(tp));
  o.check(fp <= 0.05, "black-swan FP " + fmt(fp));
  o.note("trend recovery " + fmt(recovery, 4) + ", TP " + fmt(tp, 4) + ", FP " + fmt(fp, 4) + " over 50 seeds");
  return o;
}

// ---- 9 ----
Outcome table1_ordering() {
  Outcome o;
  int ordered = 0;
  double up_sum = 0, vol_sum = 0, ext_sum = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto ds = generate_pattern_panel(10, 1000 + seed, 250);
    const ReturnPanel r = compute_returns(ds.panel);
    SegmentOptions opts;
    opts.cohort_size = 10;
    const auto lab = classify_segment(r, ds.panel.stock_ids(), Segment{0, 250}, opts);
    const auto rows = pattern_aggregates(ds.panel, r, lab);
    double phi[4] = {};
    for (const auto& row : rows) phi[static_cast<int>(row.pattern)] = row.forecastability;
    const double up = phi[static_cast<int>(MovementPattern::Uptrend)];
    const double vol = phi[static_cast<int>(MovementPattern::Volatile)];
    const double ext = phi[static_cast<int>(MovementPattern::Extreme)];
    ordered += up > vol && vol > ext;
    up_sum += up, vol_sum += vol, ext_sum += ext;
  }
  o.check(ordered >= 45, std::to_string(ordered) + "/50 runs ordered");
  o.note(std::to_string(ordered) + "/50 runs ordered; mean phi up " + fmt(up_sum / 50, 3) + " > volatile " +
         fmt(vol_sum / 50, 3) + " > extreme " + fmt(ext_sum / 50, 3));
  return o;
}

// ---- 10 ----
double strategy_arr(const PricePanel& panel, const ScorePanel& scores, DayRange range) {
  BacktestConfig cfg;
  cfg.m = 10;
  cfg.n = 2;
  const auto st = run_backtest(scores, panel, cfg, range);
  return portfolio_metrics(st.daily_returns, {}).arr;
}

ScorePanel momentum_scores(const ReturnPanel& r, PredictorKind kind, std::size_t window) {
  ScorePanel s(r.n_stocks(), r.n_days());
  for (std::size_t t = window; t < r.n_days(); ++t) {
    s.set_day(t, kind == PredictorKind::CSM ? predict_csm(r, t, window) : predict_blsw(r, t, window));
  }
  return s;
}

Outcome strategy_sanity() {
  Outcome o;
  const std::size_t n_stocks = 100, n_days = 250, window = 5;
  const DayRange range{window, n_days};
  int reverting_wins = 0, trending_wins = 0, foresight_wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    {
      const PricePanel p = mean_reverting_panel(n_stocks, n_days, 2000 + seed);
      const ReturnPanel r = compute_returns(p);
      reverting_wins += strategy_arr(p, momentum_scores(r, PredictorKind::BLSW, window), range) >
                        strategy_arr(p, momentum_scores(r, PredictorKind::CSM, window), range);
    }
    {
      const PricePanel p = trending_panel(n_stocks, n_days, 3000 + seed);
      const ReturnPanel r = compute_returns(p);
      trending_wins += strategy_arr(p, momentum_scores(r, PredictorKind::CSM, window), range) >
                       strategy_arr(p, momentum_scores(r, PredictorKind::BLSW, window), range);
      foresight_wins += strategy_arr(p, foresight_scores(r), range) >
                        strategy_arr(p, random_scores(n_stocks, n_days, 4000 + seed), range);
    }
  }
  o.check(reverting_wins >= 17, "BLSW > CSM on mean-reverting in " + std::to_string(reverting_wins) + "/20");
  o.check(trending_wins >= 17, "CSM > BLSW on trending in " + std::to_string(trending_wins) + "/20");
  o.check(foresight_wins == 20, "foresight > random in " + std::to_string(foresight_wins) + "/20");
  o.note("BLSW>CSM reverting " + std::to_string(reverting_wins) + "/20, CSM>BLSW trending " +
         std::to_string(trending_wins) + "/20, foresight>random " + std::to_string(foresight_wins) + "/20");
  return o;
}

// ---- 11 ----
RunConfig smoke_config(const std::filesystem::path& out) {
  const std::string text = R"({
    "seed": 42,
    "data": {"source": "synth", "cohort_size": 10, "n_days": 250},
    "segment": {"length": 250, "cohort_size": 10},
    "predictors": [
      {"kind": "csm", "window": 20},
      {"kind": "ridge", "ridge_lambda": 10.0},
      {"kind": "linear_ranker", "name": "ranker"}
    ],
    "backtest": {"strategy": "topk_drop", "m": 10, "n": 2, "fee_rate": 0.001}
  })";
  RunConfig c = parse_run_config(text);
  c.output.dir = out;
  return c;
}

Outcome end_to_end() {
  Outcome o;
  TempDir tmp("finbench-acceptance");
  RunConfig c = smoke_config(tmp.path() / "runs");
  const auto t0 = std::chrono::steady_clock::now();
  cmd_synth(c);
  RunConfig from_csv = c;
  from_csv.data.source = DataSource::Csv;
  from_csv.data.path = c.output.dir / "panel.csv";
  cmd_build(from_csv);
  const RunResult a = cmd_run(from_csv);
  const auto report = cmd_report({a.archive}, tmp.path() / "report");
  const double secs = seconds_since(t0);
  const RunResult b = cmd_run(from_csv);
  const std::string ja = read_file(a.archive / "metrics.json");
  const std::string jb = read_file(b.archive / "metrics.json");
  o.check(!ja.empty() && ja == jb, "metrics JSON differs between identical runs");
  for (const auto& name : a.model_names) {
    o.check(read_file(a.archive / "models" / name / "metrics.json") ==
                read_file(b.archive / "models" / name / "metrics.json"),
            "per-model metrics differ for " + name);
  }
  // Report: one 11-column row per predictor.
  std::istringstream rep(read_file(report / "report.csv"));
  std::string header, line;
  std::getline(rep, header);
  o.check(header == "model,MSE,MAE,IC,ICIR,RankIC,RankICIR,ARR,AVol,MDD,ASR,IR", "report header " + header);
  std::size_t rows = 0;
  while (std::getline(rep, line)) {
    if (line.empty()) continue;
    ++rows;
    o.check(std::count(line.begin(), line.end(), ',') == 11, "report row shape: " + line);
  }
  o.check(rows == 3, "report rows " + std::to_string(rows));
  o.check(secs < 60.0, "smoke pipeline " + fmt(secs) + " s >= 60 s");
  o.note("byte-identical metrics JSON, " + std::to_string(rows) + " report rows, smoke pipeline " + fmt(secs, 3) +
         " s");
  return o;
}

// ---- 12 ----
Outcome leak_audit() {
  Outcome o;
  TempDir tmp("finbench-leak");
  std::size_t identical = 0, total = 0;
  // Whole universe, and a pattern cohort labeled on pre-test days only.
  for (const char* universe : {"all", "uptrend"}) {
    RunConfig c = smoke_config(tmp.path());
    c.segment.universe = universe;
    c.segment.label_window = std::string(universe) == "all" ? "segment" : "pre_test";
    c.predictors.clear();
    for (auto kind : {PredictorKind::CSM, PredictorKind::BLSW, PredictorKind::Ridge, PredictorKind::LinearRanker}) {
      PredictorSpec s;
      s.kind = kind;
      s.seed = c.seed;
      s.epochs = 60;
      s.lookback = 5;
      c.predictors.push_back(s);
    }
    const PricePanel clean = load_data(c);
    const RunDataset base = prepare_dataset(c, clean);
    const std::size_t boundary = base.split.test.begin;
    const PricePanel poisoned_panel = poison_after(clean, boundary);
    const RunDataset poisoned = prepare_dataset(c, poisoned_panel);

    o.check(poisoned.split == base.split, std::string(universe) + ": split moved");
    o.check(poisoned.panel.stock_ids() == base.panel.stock_ids(), std::string(universe) + ": universe changed");
    // Every training-time input: features and returns before the boundary.
    bool inputs_same = true;
    for (std::size_t i = 0; i < base.features.n_stocks(); ++i) {
      for (std::size_t t = 0; t < boundary; ++t) {
        for (std::size_t f = 0; f < base.features.n_features(); ++f) {
          const double a = base.features.at(i, t, f), b = poisoned.features.at(i, t, f);
          inputs_same = inputs_same && (a == b || (std::isnan(a) && std::isnan(b)));
        }
        const bool va = base.returns.valid(i, t), vb = poisoned.returns.valid(i, t);
        inputs_same = inputs_same && va == vb && (!va || base.returns.value(i, t) == poisoned.returns.value(i, t));
      }
    }
    o.check(inputs_same, std::string(universe) + ": training-period features or returns changed");
    // Poisoning must be visible after the boundary, or the audit is vacuous.
    o.check(poisoned.returns.value(0, boundary) != base.returns.value(0, boundary), "poison not applied");

    const auto m_base = train_models(c, base);
    const auto m_poison = train_models(c, poisoned);
    for (std::size_t k = 0; k < m_base.size(); ++k) {
      const bool same = model_to_json(m_base[k]) == model_to_json(m_poison[k]);
      identical += same;
      ++total;
      o.check(same, std::string(universe) + ": model " + m_base[k].spec.label() + " changed");
    }
  }
  o.note(std::to_string(identical) + "/" + std::to_string(total) +
         " trained models bit-identical with every day from the test start poisoned (universe all; uptrend cohort "
         "labeled pre-test)");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metric identities (IC = RankIC = +/-1)", metric_identities},
      {2, "MDD hand case", mdd_hand_case},
      {3, "ARR closed form", arr_closed_form},
      {4, "TopK-Drop protocol invariants", topk_drop_protocol},
      {5, "fee consistency", fee_consistency},
      {6, "composite loss and gradient", composite_loss_checks},
      {7, "characteristics oracles", characteristics_oracles},
      {8, "segmenter recovery and black-swan detector", segmenter_recovery},
      {9, "forecastability ordering up > volatile > extreme", table1_ordering},
      {10, "strategy sanity", strategy_sanity},
      {11, "end-to-end determinism and smoke pipeline", end_to_end},
      {12, "leak-freedom audit", leak_audit},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
