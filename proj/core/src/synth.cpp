#include "finbench/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "finbench/error.hpp"
#include "finbench/panel_io.hpp"

namespace finbench {

void RegimeSpec::validate() const {
  if (!std::isfinite(daily_drift) || !std::isfinite(jump_scale)) throw ConfigError("regime parameters must be finite");
  if (!(daily_vol >= 0.0)) throw ConfigError("daily_vol must be non-negative");
  if (daily_vol == 0.0 && (daily_drift != 0.0 || jump_prob != 0.0)) {
    throw ConfigError("daily_vol must be positive unless the regime is flat");
  }
  if (!(jump_prob >= 0.0 && jump_prob <= 1.0)) throw ConfigError("jump_prob must lie in [0, 1]");
  if (!(ar1_coeff > -1.0 && ar1_coeff < 1.0)) throw ConfigError("ar1_coeff must lie in (-1, 1)");
}

RegimeSpec preset_regime(MovementPattern pattern) {
  switch (pattern) {
    case MovementPattern::Uptrend:
      return {pattern, 0.0025, 0.01, 0.0, 0.0, 0.5};
    case MovementPattern::Downtrend:
      return {pattern, -0.0025, 0.01, 0.0, 0.0, 0.5};
    case MovementPattern::Volatile:
      return {pattern, 0.0, 0.02, 0.0, 0.0, -0.25};
    case MovementPattern::Extreme:
      return {pattern, 0.0, 0.015, 0.03, 0.2, 0.0};
  }
  throw ConfigError("unknown pattern");
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

std::vector<std::string> business_calendar(std::size_t n_days, const std::string& first) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0, d = 0;
  if (!is_iso_date(first) || std::sscanf(first.c_str(), "%d-%u-%u", &y, &m, &d) != 3) {
    throw ConfigError("bad calendar start '" + first + "'");
  }
  sys_days day{year{y} / month{m} / d};
  std::vector<std::string> out;
  out.reserve(n_days);
  char buf[16];
  while (out.size() < n_days) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day};
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      out.emplace_back(buf);
    }
    day += days{1};
  }
  return out;
}

std::string synthetic_stock_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%04zu", index);
  return buf;
}

PricePanel generate_panel(std::size_t n_stocks, std::size_t n_days, const std::vector<RegimeSpec>& regimes,
                          std::uint64_t seed) {
  if (n_days < 2) throw ConfigError("synthetic panel needs at least 2 days");
  if (n_stocks == 0) throw ConfigError("synthetic panel needs at least 1 stock");
  if (regimes.size() != n_stocks) throw ConfigError("one regime per stock is required");
  for (const auto& r : regimes) r.validate();

  PricePanel::Data data;
  data.calendar = business_calendar(n_days);
  data.feature_names = {"open", "high", "low", "close", "volume"};
  data.features.resize(n_stocks * n_days * 5);
  for (std::size_t i = 0; i < n_stocks; ++i) {
    data.stock_ids.push_back(synthetic_stock_id(i));
    const RegimeSpec& reg = regimes[i];
    std::mt19937_64 rng(derive_seed(seed, i));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    double log_price = std::log(100.0);
    double x_prev = 0.0;
    double prev_close = 100.0;
    for (std::size_t t = 0; t < n_days; ++t) {
      // Every draw happens unconditionally so streams stay aligned across regimes.
      const double eps = normal(rng);
      const double u_jump = unif(rng);
      const double u_sign = unif(rng);
      const double gap = normal(rng);
      const double wick_hi = std::abs(normal(rng));
      const double wick_lo = std::abs(normal(rng));
      const double vol_noise = normal(rng);
      double x = reg.daily_drift + reg.ar1_coeff * x_prev + reg.daily_vol * eps;
      if (u_jump < reg.jump_prob) x += (u_sign < 0.5 ? -1.0 : 1.0) * reg.jump_scale;
      log_price += x;
      x_prev = x;
      const double close = std::exp(log_price);
      const double open = prev_close * std::exp(0.25 * reg.daily_vol * gap);
      const double high = std::max(open, close) * std::exp(0.5 * reg.daily_vol * wick_hi);
      const double low = std::min(open, close) * std::exp(-0.5 * reg.daily_vol * wick_lo);
      double* cell = &data.features[(i * n_days + t) * 5];
      cell[0] = open;
      cell[1] = high;
      cell[2] = low;
      cell[3] = close;
      cell[4] = std::exp(10.0 + vol_noise);
      prev_close = close;
    }
  }
  return PricePanel::create(std::move(data));
}

SyntheticDataset generate_pattern_panel(std::size_t cohort_size, std::uint64_t seed, std::size_t n_days) {
  if (cohort_size == 0) throw ConfigError("cohort_size must be positive");
  const std::size_t n = 4 * cohort_size;
  std::vector<MovementPattern> assignment;
  for (MovementPattern p : kAllPatterns) assignment.insert(assignment.end(), cohort_size, p);
  std::mt19937_64 rng(derive_seed(seed, 0xFFFFFFFFULL));
  std::shuffle(assignment.begin(), assignment.end(), rng);

  std::vector<RegimeSpec> regimes;
  regimes.reserve(n);
  for (MovementPattern p : assignment) regimes.push_back(preset_regime(p));
  SyntheticDataset out{generate_panel(n, n_days, regimes, seed), {}};
  for (std::size_t i = 0; i < n; ++i) out.truth[out.panel.stock_ids()[i]] = assignment[i];
  return out;
}

void write_truth_csv(std::ostream& out, const std::map<std::string, MovementPattern>& truth) {
  out << "stock_id,pattern\n";
  for (const auto& [id, p] : truth) out << id << ',' << to_string(p) << '\n';
}

std::map<std::string, MovementPattern> read_truth_csv(std::istream& in) {
  std::map<std::string, MovementPattern> truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "stock_id,pattern") throw DataError("truth CSV: bad header");
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw DataError("truth CSV line " + std::to_string(line_no) + ": expected 2 fields");
    truth[cells[0]] = parse_pattern(cells[1]);
  }
  return truth;
}

}  // namespace finbench
