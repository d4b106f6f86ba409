#include "finbench/characteristics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <unsupported/Eigen/FFT>

#include <nlohmann/json.hpp>

#include "finbench/panel_io.hpp"

namespace finbench {

namespace {

void require_finite(std::span<const double> s, const char* what) {
  for (double v : s) {
    if (!std::isfinite(v)) throw DataError(std::string(what) + ": series contains non-finite values");
  }
}

double mean_of(std::span<const double> s) {
  double m = 0.0;
  for (double v : s) m += v;
  return m / static_cast<double>(s.size());
}

// Sum of squared deviations is negligible against the raw energy, i.e. the
// series is constant up to rounding.
bool negligible_variance(std::span<const double> s, double ss) {
  double energy = 0.0;
  for (double v : s) energy += v * v;
  return !(ss > 1e-26 * energy);
}

}  // namespace

std::size_t schwert_lag(std::size_t n) {
  return static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

AdfResult adf_statistic(std::span<const double> series, std::optional<std::size_t> lags, AdfTrend trend) {
  require_finite(series, "adf_statistic");
  const std::size_t n = series.size();
  const std::size_t p = lags.value_or(schwert_lag(n));
  if (n < p + 10) {
    throw DataError("adf_statistic: series of length " + std::to_string(n) + " too short for " + std::to_string(p) +
                    " lags");
  }
  const bool with_trend = trend == AdfTrend::ConstantTrend;
  const std::size_t nobs = n - 1 - p;
  const std::size_t k = 2 + (with_trend ? 1 : 0) + p;
  if (nobs <= k) throw DataError("adf_statistic: not enough observations for the regression");

  // Columns: s_{t-1}, 1, [t], ds_{t-1}..ds_{t-p}
  Eigen::MatrixXd x(nobs, k);
  Eigen::VectorXd y(nobs);
  for (std::size_t row = 0; row < nobs; ++row) {
    const std::size_t t = row + p + 1;
    y(row) = series[t] - series[t - 1];
    std::size_t c = 0;
    x(row, c++) = series[t - 1];
    x(row, c++) = 1.0;
    if (with_trend) x(row, c++) = static_cast<double>(row + 1);
    for (std::size_t j = 1; j <= p; ++j) x(row, c++) = series[t - j] - series[t - j - 1];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(x);
  pivoted.setThreshold(1e-10);
  if (pivoted.rank() < static_cast<Eigen::Index>(k)) {
    throw NumericError("adf_statistic: rank-deficient design matrix (constant or degenerate series)");
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(nobs - k);

  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const double var_gamma = sigma2 * r_inv.row(0).squaredNorm();
  if (!(var_gamma > 0.0) || !std::isfinite(var_gamma)) {
    throw NumericError("adf_statistic: zero residual variance");
  }

  AdfResult out;
  out.gamma_hat = beta(0);
  out.alpha_hat = beta(1);
  out.beta_hat = with_trend ? beta(2) : 0.0;
  out.statistic = beta(0) / std::sqrt(var_gamma);
  out.lags_used = p;
  out.nobs = nobs;
  out.residual_variance = sigma2;
  if (!std::isfinite(out.statistic)) throw NumericError("adf_statistic: non-finite statistic");
  return out;
}

double autocorrelation(std::span<const double> series, std::size_t lag) {
  require_finite(series, "autocorrelation");
  const std::size_t n = series.size();
  if (n <= lag) throw DataError("autocorrelation: lag must be smaller than the series length");
  const double m = mean_of(series);
  double den = 0.0;
  for (double v : series) den += (v - m) * (v - m);
  if (negligible_variance(series, den)) throw NumericError("undefined autocorrelation: zero variance");
  double num = 0.0;
  for (std::size_t t = 0; t + lag < n; ++t) num += (series[t] - m) * (series[t + lag] - m);
  return num / den;
}

double forecastability(std::span<const double> series, const ForecastabilityOptions& options,
                       Diagnostics* diagnostics) {
  require_finite(series, "forecastability");
  const std::size_t n = series.size();
  if (n < 16) throw DataError("forecastability: series needs at least 16 values");
  const double m = mean_of(series);
  std::vector<double> centered(n);
  double ss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    centered[t] = series[t] - m;
    ss += centered[t] * centered[t];
  }
  if (negligible_variance(series, ss)) {
    if (diagnostics) diagnostics->warn("forecastability: zero-power series, defined as 0");
    return 0.0;
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, centered);
  const std::size_t bins = n / 2;
  std::vector<double> power(bins);
  double total = 0.0;
  for (std::size_t k = 1; k <= bins; ++k) {
    power[k - 1] = std::norm(spectrum[k]);
    total += power[k - 1];
  }
  if (!(total > 0.0)) {
    if (diagnostics) diagnostics->warn("forecastability: zero-power series, defined as 0");
    return 0.0;
  }
  double entropy = 0.0;
  for (double p : power) {
    const double q = p / total;
    if (q > 0.0) entropy -= q * std::log(q);
  }
  const double norm = options.normalization == EntropyNormalization::LogBins ? std::log(static_cast<double>(bins))
                                                                              : std::log(2.0 * std::numbers::pi);
  return std::clamp(1.0 - entropy / norm, 0.0, 1.0);
}

StockCharacteristics characterize_stock(std::span<const double> closes, std::span<const double> returns,
                                        const CharacteristicsOptions& options, Diagnostics* diagnostics) {
  StockCharacteristics out;
  try {
    out.adf = adf_statistic(closes, options.adf_lags, options.adf_trend).statistic;
  } catch (const Error& e) {
    if (diagnostics) diagnostics->warn(std::string("ADF skipped: ") + e.what());
  }
  try {
    out.autocorr = autocorrelation(returns, options.autocorr_lag);
  } catch (const Error& e) {
    if (diagnostics) diagnostics->warn(std::string("autocorrelation skipped: ") + e.what());
  }
  try {
    out.forecastability = forecastability(returns, options.forecastability, diagnostics);
  } catch (const Error& e) {
    if (diagnostics) diagnostics->warn(std::string("forecastability skipped: ") + e.what());
  }
  return out;
}

std::vector<CharacteristicsRow> pattern_aggregates(const PricePanel& panel, const ReturnPanel& returns,
                                                   const SegmentLabeling& labeling,
                                                   const CharacteristicsOptions& options, Diagnostics* diagnostics) {
  const auto& ids = panel.stock_ids();
  if (labeling.segment.end > panel.n_days()) throw DataError("labeling segment exceeds panel range");
  std::vector<CharacteristicsRow> rows;
  for (auto pattern : kAllPatterns) {
    const auto members = labeling.members(pattern);
    if (members.empty()) {
      if (options.skip_empty) {
        if (diagnostics) diagnostics->warn("empty " + std::string(to_string(pattern)) + " cohort skipped");
        continue;
      }
      throw DataError("empty " + std::string(to_string(pattern)) + " cohort");
    }
    double adf_sum = 0.0, tau_sum = 0.0, phi_sum = 0.0;
    std::size_t adf_n = 0, tau_n = 0, phi_n = 0;
    for (const auto& id : members) {
      const auto it = std::lower_bound(ids.begin(), ids.end(), id);
      if (it == ids.end() || *it != id) throw DataError("labeled stock '" + id + "' is not in the panel");
      const auto i = static_cast<std::size_t>(it - ids.begin());
      std::vector<double> closes;
      for (std::size_t t = labeling.segment.begin; t < labeling.segment.end; ++t) {
        if (panel.present(i, t)) closes.push_back(panel.close(i, t));
      }
      const auto r = segment_returns(returns, i, labeling.segment);
      const auto c = characterize_stock(closes, r, options, diagnostics);
      if (c.adf) adf_sum += *c.adf, ++adf_n;
      if (c.autocorr) tau_sum += *c.autocorr, ++tau_n;
      if (c.forecastability) phi_sum += *c.forecastability, ++phi_n;
    }
    CharacteristicsRow row;
    row.pattern = pattern;
    row.members = members.size();
    row.non_stationarity = adf_n ? adf_sum / static_cast<double>(adf_n) : kMissing;
    row.autocorrelation = tau_n ? tau_sum / static_cast<double>(tau_n) : kMissing;
    row.forecastability = phi_n ? phi_sum / static_cast<double>(phi_n) : kMissing;
    row.split = options.split_label;
    rows.push_back(row);
  }
  return rows;
}

void write_characteristics_csv(std::ostream& out, std::span<const CharacteristicsRow> rows) {
  out << "pattern,non_stationarity,autocorrelation,forecastability,split,members\n";
  for (const auto& r : rows) {
    out << to_string(r.pattern) << ',' << format_double(r.non_stationarity) << ',' << format_double(r.autocorrelation)
        << ',' << format_double(r.forecastability) << ',' << r.split << ',' << r.members << '\n';
  }
}

std::string characteristics_to_json(std::span<const CharacteristicsRow> rows) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["pattern"] = to_string(r.pattern);
    j["non_stationarity"] = num(r.non_stationarity);
    j["autocorrelation"] = num(r.autocorrelation);
    j["forecastability"] = num(r.forecastability);
    j["split"] = r.split;
    j["members"] = r.members;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace finbench
