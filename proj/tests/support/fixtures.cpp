#include "fixtures.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fbtest {

namespace fs = std::filesystem;

fs::path data_path(const std::string& name) { return fs::path(FINBENCH_TEST_DATA_DIR) / name; }

std::vector<double> read_series(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing test data " + path.string());
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

PricePanel panel_from_closes(const std::vector<std::vector<double>>& closes,
                             const std::vector<std::vector<std::uint8_t>>& tradable) {
  PricePanel::Data d;
  const std::size_t n = closes.size();
  const std::size_t t = n ? closes[0].size() : 0;
  d.calendar = business_calendar(t);
  d.feature_names = {"open", "high", "low", "close", "volume"};
  for (std::size_t i = 0; i < n; ++i) d.stock_ids.push_back(synthetic_stock_id(i));
  d.features.resize(n * t * 5);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < t; ++k) {
      double* c = &d.features[(i * t + k) * 5];
      const double p = closes[i][k];
      c[0] = c[1] = c[2] = c[3] = p;
      c[4] = std::isfinite(p) ? 1000.0 : p;
    }
  }
  if (!tradable.empty()) {
    d.tradability.emplace();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < t; ++k) d.tradability->push_back(tradable[i][k]);
    }
  }
  return PricePanel::create(std::move(d));
}

PricePanel regime_panel(std::size_t n_stocks, std::size_t n_days, const RegimeSpec& regime, std::uint64_t seed) {
  return generate_panel(n_stocks, n_days, std::vector<RegimeSpec>(n_stocks, regime), seed);
}

PricePanel mean_reverting_panel(std::size_t n_stocks, std::size_t n_days, std::uint64_t seed) {
  RegimeSpec r;
  r.daily_vol = 0.02;
  r.ar1_coeff = -0.3;
  return regime_panel(n_stocks, n_days, r, seed);
}

PricePanel trending_panel(std::size_t n_stocks, std::size_t n_days, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xABCDEF));
  std::normal_distribution<double> drift(0.0, 0.002);
  std::vector<RegimeSpec> regimes(n_stocks);
  for (auto& r : regimes) {
    r.daily_drift = drift(rng);
    r.daily_vol = 0.02;
    r.ar1_coeff = 0.1;
  }
  return generate_panel(n_stocks, n_days, regimes, seed);
}

PricePanel poison_after(const PricePanel& panel, std::size_t first_day, double sentinel) {
  PricePanel::Data d;
  d.stock_ids = panel.stock_ids();
  d.calendar = panel.calendar();
  d.feature_names = panel.feature_names();
  d.features = panel.raw();
  const std::size_t f = panel.n_features();
  const auto vol = *panel.feature_index("volume");
  for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
    for (std::size_t t = first_day; t < panel.n_days(); ++t) {
      double* c = &d.features[(i * panel.n_days() + t) * f];
      for (std::size_t k = 0; k < f; ++k) c[k] = sentinel * static_cast<double>(1 + (i + t) % 7);
      c[vol] = 1.0e12;
    }
  }
  if (panel.has_tradability_mask()) {
    d.tradability.emplace();
    for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
      for (std::size_t t = 0; t < panel.n_days(); ++t) d.tradability->push_back(panel.tradable(i, t) ? 1 : 0);
    }
  }
  return PricePanel::create(std::move(d));
}

ScorePanel random_scores(std::size_t n_stocks, std::size_t n_days, std::uint64_t seed) {
  ScorePanel s(n_stocks, n_days);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t t = 0; t < n_days; ++t) {
    for (std::size_t i = 0; i < n_stocks; ++i) s.set(i, t, u(rng));
  }
  return s;
}

ScorePanel foresight_scores(const ReturnPanel& returns) {
  ScorePanel s(returns.n_stocks(), returns.n_days());
  for (std::size_t t = 0; t + 1 < returns.n_days(); ++t) {
    for (std::size_t i = 0; i < returns.n_stocks(); ++i) {
      if (returns.valid(i, t + 1)) s.set(i, t, returns.value(i, t + 1));
    }
  }
  return s;
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  std::vector<double> out(n);
  for (auto& v : out) v = z(rng);
  return out;
}

std::vector<double> random_walk(std::size_t n, std::uint64_t seed) {
  auto steps = white_noise(n, seed);
  double s = 0.0;
  for (auto& v : steps) v = (s += v);
  return steps;
}

std::vector<double> ar1_series(std::size_t n, double phi, std::uint64_t seed) {
  auto e = white_noise(n + 200, seed);
  std::vector<double> out;
  double x = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) {
    x = phi * x + e[t];
    if (t >= 200) out.push_back(x);
  }
  return out;
}

std::vector<double> sinusoid(std::size_t n, double cycles, double amplitude, double phase) {
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = amplitude * std::sin(2.0 * M_PI * cycles * static_cast<double>(t) / static_cast<double>(n) + phase);
  }
  return out;
}

double adf_oracle(const std::vector<double>& s, std::size_t p, bool trend) {
  using LD = long double;
  const std::size_t n = s.size();
  std::vector<LD> ds(n - 1);
  for (std::size_t t = 1; t < n; ++t) ds[t - 1] = static_cast<LD>(s[t]) - s[t - 1];
  // Rows: t = p .. n-2 over ds indices; regress ds[t] on s[t], 1, (t), ds[t-1..t-p].
  std::vector<std::vector<LD>> rows;
  std::vector<LD> y;
  for (std::size_t t = p; t < ds.size(); ++t) {
    std::vector<LD> r{static_cast<LD>(s[t]), 1.0L};
    if (trend) r.push_back(static_cast<LD>(t + 1));
    for (std::size_t j = 1; j <= p; ++j) r.push_back(ds[t - j]);
    rows.push_back(r);
    y.push_back(ds[t]);
  }
  const std::size_t k = rows[0].size();
  const std::size_t m = rows.size();
  // [X'X | I | X'y] reduced by Gauss-Jordan with partial pivoting.
  std::vector<std::vector<LD>> a(k, std::vector<LD>(2 * k + 1, 0.0L));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t r = 0; r < m; ++r) a[i][j] += rows[r][i] * rows[r][j];
    }
    a[i][k + i] = 1.0L;
    for (std::size_t r = 0; r < m; ++r) a[i][2 * k] += rows[r][i] * y[r];
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    const LD d = a[c][c];
    for (auto& v : a[c]) v /= d;
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const LD f = a[r][c];
      for (std::size_t j = 0; j < 2 * k + 1; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<LD> beta(k);
  for (std::size_t i = 0; i < k; ++i) beta[i] = a[i][2 * k];
  LD rss = 0.0L;
  for (std::size_t r = 0; r < m; ++r) {
    LD fit = 0.0L;
    for (std::size_t j = 0; j < k; ++j) fit += rows[r][j] * beta[j];
    rss += (y[r] - fit) * (y[r] - fit);
  }
  const LD sigma2 = rss / static_cast<LD>(m - k);
  const LD se = std::sqrt(sigma2 * a[0][k]);
  return static_cast<double>(beta[0] / se);
}

std::vector<double> equity_from_trades(const std::vector<Trade>& trades, const PricePanel& panel, DayRange days,
                                       double initial_capital) {
  std::map<std::size_t, double> shares;
  std::map<std::size_t, double> mark;
  double cash = initial_capital;
  std::vector<double> out;
  std::size_t k = 0;
  for (std::size_t t = days.begin; t < days.end; ++t) {
    for (auto& [s, q] : shares) {
      if (std::isfinite(panel.close(s, t))) mark[s] = panel.close(s, t);
    }
    for (; k < trades.size() && trades[k].day == t; ++k) {
      const Trade& tr = trades[k];
      const double sign = tr.side == Side::Buy ? 1.0 : -1.0;
      shares[tr.stock] += sign * tr.shares;
      mark[tr.stock] = tr.price;
      cash -= sign * tr.shares * tr.price + tr.fee;
    }
    double v = cash;
    for (const auto& [s, q] : shares) v += q * mark[s];
    out.push_back(v);
  }
  return out;
}

TempDir::TempDir(const std::string& stem) {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    path_ = fs::temp_directory_path() / (stem + "-" + std::to_string(rng() % 100000000));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fbtest
