#include "finbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace finbench {

std::string_view to_string(IcMode mode) {
  return mode == IcMode::CrossSectional ? "cross_sectional" : "per_stock_temporal";
}

IcMode parse_ic_mode(std::string_view name) {
  if (name == "cross_sectional") return IcMode::CrossSectional;
  if (name == "per_stock_temporal") return IcMode::PerStockTemporal;
  throw ConfigError("unknown ic_mode '" + std::string(name) + "'");
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return kMissing;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return kMissing;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  return pearson(rx, ry);
}

namespace {

double correlate(CorrelationKind kind, std::span<const double> x, std::span<const double> y) {
  return kind == CorrelationKind::Pearson ? pearson(x, y) : spearman(x, y);
}

std::optional<double> opt(double v) {
  if (std::isfinite(v)) return v;
  return std::nullopt;
}

// Spread at the level of rounding noise counts as zero.
bool negligible_sd(double sd, double mean) { return !(sd > 1e-15 * std::max(1.0, std::abs(mean))); }

std::optional<double> try_ir(std::span<const double> v) {
  try {
    return information_ratio_of(v);
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<double> DailySeries::valid_values() const {
  std::vector<double> out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (valid[k]) out.push_back(values[k]);
  }
  return out;
}

DailySeries daily_ic_series(const ScorePanel& scores, const ReturnPanel& returns, CorrelationKind kind,
                            DayRange days) {
  if (scores.n_stocks() != returns.n_stocks() || scores.n_days() != returns.n_days()) {
    throw DataError("score and return panels have different shapes");
  }
  DailySeries out;
  std::vector<double> y, r;
  for (std::size_t t = days.begin; t < days.end && t + 1 < returns.n_days(); ++t) {
    y.clear();
    r.clear();
    for (std::size_t i = 0; i < scores.n_stocks(); ++i) {
      if (scores.valid(i, t) && returns.valid(i, t + 1)) {
        y.push_back(scores.value(i, t));
        r.push_back(returns.value(i, t + 1));
      }
    }
    const double c = y.size() >= 3 ? correlate(kind, y, r) : kMissing;
    out.days.push_back(t);
    out.values.push_back(std::isfinite(c) ? c : kMissing);
    out.valid.push_back(std::isfinite(c) ? 1 : 0);
  }
  return out;
}

std::vector<double> per_stock_ic_values(const ScorePanel& scores, const ReturnPanel& returns, CorrelationKind kind,
                                        DayRange days) {
  std::vector<double> out;
  std::vector<double> y, r;
  for (std::size_t i = 0; i < scores.n_stocks(); ++i) {
    y.clear();
    r.clear();
    for (std::size_t t = days.begin; t < days.end && t + 1 < returns.n_days(); ++t) {
      if (scores.valid(i, t) && returns.valid(i, t + 1)) {
        y.push_back(scores.value(i, t));
        r.push_back(returns.value(i, t + 1));
      }
    }
    if (y.size() < 3) continue;
    const double c = correlate(kind, y, r);
    if (std::isfinite(c)) out.push_back(c);
  }
  return out;
}

std::optional<double> per_stock_temporal_ic(const ScorePanel& scores, const ReturnPanel& returns,
                                            CorrelationKind kind, DayRange days) {
  const auto v = per_stock_ic_values(scores, returns, kind, days);
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double information_ratio_of(std::span<const double> series) {
  std::vector<double> v;
  for (double x : series) {
    if (std::isfinite(x)) v.push_back(x);
  }
  if (v.size() < 2) throw NumericError("information ratio needs at least 2 values");
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (negligible_sd(sd, mean)) throw NumericError("information ratio undefined: zero std");
  return mean / sd;
}

double max_drawdown(std::span<const double> equity) {
  double peak = -std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (double e : equity) {
    peak = std::max(peak, e);
    if (peak > 0.0) worst = std::max(worst, 1.0 - e / peak);
  }
  return worst == 0.0 ? 0.0 : -worst;
}

PortfolioMetrics portfolio_metrics(std::span<const double> portfolio_returns,
                                   std::span<const double> benchmark_returns) {
  const std::size_t n = portfolio_returns.size();
  if (n < 2) throw DataError("portfolio metrics need at least 2 daily returns");
  if (!benchmark_returns.empty() && benchmark_returns.size() != n) {
    throw DataError("portfolio and benchmark return series are not aligned");
  }
  PortfolioMetrics m;
  std::vector<double> equity{1.0};
  double growth = 1.0;
  for (double r : portfolio_returns) {
    growth *= 1.0 + r;
    equity.push_back(growth);
  }
  m.arr = std::pow(growth, kTradingDaysPerYear / static_cast<double>(n)) - 1.0;

  const double mean = std::accumulate(portfolio_returns.begin(), portfolio_returns.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double r : portfolio_returns) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  m.avol = negligible_sd(sd, mean) ? 0.0 : std::sqrt(kTradingDaysPerYear) * sd;
  m.mdd = max_drawdown(equity);
  if (m.avol > 0.0) m.asr = m.arr / m.avol;

  if (!benchmark_returns.empty()) {
    std::vector<double> active(n);
    for (std::size_t k = 0; k < n; ++k) active[k] = portfolio_returns[k] - benchmark_returns[k];
    m.ir = try_ir(active);
  }
  return m;
}

ErrorMetrics error_metrics(const ScorePanel& scores, const ReturnPanel& returns, DayRange days) {
  double se = 0.0, ae = 0.0;
  std::size_t count = 0;
  for (std::size_t t = days.begin; t < days.end && t + 1 < returns.n_days(); ++t) {
    for (std::size_t i = 0; i < scores.n_stocks(); ++i) {
      if (scores.valid(i, t) && returns.valid(i, t + 1)) {
        const double d = scores.value(i, t) - returns.value(i, t + 1);
        se += d * d;
        ae += std::abs(d);
        ++count;
      }
    }
  }
  if (count == 0) throw DataError("error metrics: no jointly valid score/return pairs");
  return {se / static_cast<double>(count), ae / static_cast<double>(count)};
}

MetricsReport finish_portfolio(MetricsReport rep, const EvaluationInputs& in) {
  if (in.portfolio_returns.size() >= 2) {
    const auto p = portfolio_metrics(in.portfolio_returns, in.benchmark_returns);
    rep.arr = opt(p.arr);
    rep.avol = opt(p.avol);
    rep.mdd = opt(p.mdd);
    rep.asr = p.asr;
    rep.ir = p.ir;
  }
  return rep;
}

MetricsReport evaluate(const EvaluationInputs& in) {
  MetricsReport rep;
  rep.ic_mode = in.ic_mode;
  try {
    const auto e = error_metrics(in.scores, in.returns, in.days);
    rep.mse = e.mse;
    rep.mae = e.mae;
  } catch (const DataError&) {
  }

  rep.ic_series = daily_ic_series(in.scores, in.returns, CorrelationKind::Pearson, in.days);
  rep.rank_ic_series = daily_ic_series(in.scores, in.returns, CorrelationKind::Spearman, in.days);
  const auto ic = rep.ic_series.valid_values();
  const auto ric = rep.rank_ic_series.valid_values();
  if (in.ic_mode == IcMode::CrossSectional) {
    if (!ic.empty()) rep.ic = std::accumulate(ic.begin(), ic.end(), 0.0) / static_cast<double>(ic.size());
    if (!ric.empty()) rep.rank_ic = std::accumulate(ric.begin(), ric.end(), 0.0) / static_cast<double>(ric.size());
  } else {
    const auto ps = per_stock_ic_values(in.scores, in.returns, CorrelationKind::Pearson, in.days);
    const auto prs = per_stock_ic_values(in.scores, in.returns, CorrelationKind::Spearman, in.days);
    if (!ps.empty()) rep.ic = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
    if (!prs.empty()) rep.rank_ic = std::accumulate(prs.begin(), prs.end(), 0.0) / static_cast<double>(prs.size());
    rep.icir = try_ir(ps);
    rep.rank_icir = try_ir(prs);
    return finish_portfolio(rep, in);
  }
  rep.icir = try_ir(ic);
  rep.rank_icir = try_ir(ric);
  return finish_portfolio(rep, in);
}

namespace {

nlohmann::ordered_json series_json(const DailySeries& s) {
  nlohmann::ordered_json j;
  j["days"] = s.days;
  nlohmann::ordered_json vals = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    vals.push_back(s.valid[k] ? nlohmann::ordered_json(s.values[k]) : nlohmann::ordered_json(nullptr));
  }
  j["values"] = std::move(vals);
  return j;
}

DailySeries series_from_json(const nlohmann::json& j) {
  DailySeries s;
  s.days = j.at("days").get<std::vector<std::size_t>>();
  for (const auto& v : j.at("values")) {
    s.values.push_back(v.is_null() ? kMissing : v.get<double>());
    s.valid.push_back(v.is_null() ? 0 : 1);
  }
  return s;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& r, bool include_series) {
  nlohmann::ordered_json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  put("MSE", r.mse);
  put("MAE", r.mae);
  put("IC", r.ic);
  put("ICIR", r.icir);
  put("RankIC", r.rank_ic);
  put("RankICIR", r.rank_icir);
  put("ARR", r.arr);
  put("AVol", r.avol);
  put("MDD", r.mdd);
  put("ASR", r.asr);
  put("IR", r.ir);
  j["ic_mode"] = to_string(r.ic_mode);
  if (include_series) {
    j["ic_series"] = series_json(r.ic_series);
    j["rank_ic_series"] = series_json(r.rank_ic_series);
  }
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(std::string("metrics JSON: ") + e.what());
  }
  MetricsReport r;
  auto get = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) throw ArchiveError(std::string("metrics JSON lacks field ") + key);
    if (j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  r.mse = get("MSE");
  r.mae = get("MAE");
  r.ic = get("IC");
  r.icir = get("ICIR");
  r.rank_ic = get("RankIC");
  r.rank_icir = get("RankICIR");
  r.arr = get("ARR");
  r.avol = get("AVol");
  r.mdd = get("MDD");
  r.asr = get("ASR");
  r.ir = get("IR");
  if (j.contains("ic_mode")) r.ic_mode = parse_ic_mode(j["ic_mode"].get<std::string>());
  if (j.contains("ic_series")) r.ic_series = series_from_json(j["ic_series"]);
  if (j.contains("rank_ic_series")) r.rank_ic_series = series_from_json(j["rank_ic_series"]);
  return r;
}

}  // namespace finbench
