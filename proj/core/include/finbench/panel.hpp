#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finbench/error.hpp"

namespace finbench {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Half-open range of day indices [begin, end).
struct DayRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  bool empty() const noexcept { return size() == 0; }
  bool contains(std::size_t day) const noexcept { return day >= begin && day < end; }
  friend bool operator==(const DayRange&, const DayRange&) = default;
};

// Dense N x T grid of per-stock, per-day values with an explicit validity
// mask. Invalid cells hold NaN. The tag only distinguishes grid roles at the
// type level (realized returns vs predicted scores).
template <class Tag>
class StockDayGrid {
 public:
  StockDayGrid() = default;
  StockDayGrid(std::size_t n_stocks, std::size_t n_days)
      : n_stocks_(n_stocks),
        n_days_(n_days),
        values_(n_stocks * n_days, kMissing),
        valid_(n_stocks * n_days, 0) {}

  std::size_t n_stocks() const noexcept { return n_stocks_; }
  std::size_t n_days() const noexcept { return n_days_; }

  bool valid(std::size_t stock, std::size_t day) const { return valid_[index(stock, day)] != 0; }
  double value(std::size_t stock, std::size_t day) const { return values_[index(stock, day)]; }
  std::optional<double> at(std::size_t stock, std::size_t day) const {
    if (!valid(stock, day)) return std::nullopt;
    return value(stock, day);
  }

  // Non-finite values are stored as masked.
  void set(std::size_t stock, std::size_t day, double v) {
    const auto k = index(stock, day);
    if (std::isfinite(v)) {
      values_[k] = v;
      valid_[k] = 1;
    } else {
      values_[k] = kMissing;
      valid_[k] = 0;
    }
  }
  void mask(std::size_t stock, std::size_t day) {
    const auto k = index(stock, day);
    values_[k] = kMissing;
    valid_[k] = 0;
  }

  // Cross-section of one day; masked stocks are NaN.
  std::vector<double> day_slice(std::size_t day) const {
    std::vector<double> out(n_stocks_);
    for (std::size_t i = 0; i < n_stocks_; ++i) out[i] = values_[index(i, day)];
    return out;
  }
  void set_day(std::size_t day, std::span<const double> row) {
    for (std::size_t i = 0; i < n_stocks_ && i < row.size(); ++i) set(i, day, row[i]);
  }

  std::span<const double> stock_row(std::size_t stock) const {
    return std::span<const double>(values_).subspan(stock * n_days_, n_days_);
  }

  // Masked cells compare equal regardless of their NaN payload.
  friend bool operator==(const StockDayGrid& a, const StockDayGrid& b) {
    if (a.n_stocks_ != b.n_stocks_ || a.n_days_ != b.n_days_ || a.valid_ != b.valid_) return false;
    for (std::size_t k = 0; k < a.values_.size(); ++k) {
      if (a.valid_[k] && a.values_[k] != b.values_[k]) return false;
    }
    return true;
  }

 private:
  std::size_t index(std::size_t stock, std::size_t day) const { return stock * n_days_ + day; }

  std::size_t n_stocks_ = 0;
  std::size_t n_days_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> valid_;
};

struct ReturnTag {};
struct ScoreTag {};

// r_i^t = (p_i^t - p_i^{t-1}) / p_i^{t-1}; day 0 is always masked.
using ReturnPanel = StockDayGrid<ReturnTag>;
// Predicted ranking score y_i^t, produced from information up to day t.
using ScorePanel = StockDayGrid<ScoreTag>;

// Raw OHLCV(+extra) market state: N stocks x T days x F features.
//
// Missing cells are NaN. A stock is considered present on a day when its
// close is finite. The optional tradability mask marks halted or
// limit-locked days; absent mask means every present cell is tradable.
class PricePanel {
 public:
  struct Data {
    std::vector<std::string> stock_ids;
    std::vector<std::string> calendar;
    std::vector<std::string> feature_names;
    std::vector<double> features;  // row-major [stock][day][feature]
    std::optional<std::vector<std::uint8_t>> tradability;  // row-major [stock][day]
  };

  static constexpr std::string_view kRequiredFeatures[] = {"open", "high", "low", "close",
                                                           "volume"};

  PricePanel() = default;

  // Validates every invariant and throws DataError naming the offending
  // stock/day on the first violation.
  static PricePanel create(Data data);

  std::size_t n_stocks() const noexcept { return data_.stock_ids.size(); }
  std::size_t n_days() const noexcept { return data_.calendar.size(); }
  std::size_t n_features() const noexcept { return data_.feature_names.size(); }

  const std::vector<std::string>& stock_ids() const noexcept { return data_.stock_ids; }
  const std::vector<std::string>& calendar() const noexcept { return data_.calendar; }
  const std::vector<std::string>& feature_names() const noexcept { return data_.feature_names; }
  const std::vector<double>& raw() const noexcept { return data_.features; }
  const Data& data() const noexcept { return data_; }

  std::optional<std::size_t> feature_index(std::string_view name) const;
  std::size_t close_index() const noexcept { return close_; }

  double feature(std::size_t stock, std::size_t day, std::size_t f) const {
    return data_.features[(stock * n_days() + day) * n_features() + f];
  }
  double close(std::size_t stock, std::size_t day) const { return feature(stock, day, close_); }
  bool present(std::size_t stock, std::size_t day) const { return std::isfinite(close(stock, day)); }
  bool has_tradability_mask() const noexcept { return data_.tradability.has_value(); }
  bool tradable(std::size_t stock, std::size_t day) const {
    if (!present(stock, day)) return false;
    if (!data_.tradability) return true;
    return (*data_.tradability)[stock * n_days() + day] != 0;
  }

  PricePanel select_stocks(std::span<const std::size_t> stocks) const;
  PricePanel slice_days(DayRange days) const;

  friend bool operator==(const PricePanel& a, const PricePanel& b);

 private:
  explicit PricePanel(Data data, std::size_t close) : data_(std::move(data)), close_(close) {}

  Data data_;
  std::size_t close_ = 0;
};

// Model-input feature tensor with the same shape as a PricePanel but without
// price invariants (z-scores are signed). NaN marks missing cells.
struct FeaturePanel {
  std::vector<std::string> stock_ids;
  std::vector<std::string> calendar;
  std::vector<std::string> feature_names;
  std::vector<double> values;  // row-major [stock][day][feature]

  std::size_t n_stocks() const noexcept { return stock_ids.size(); }
  std::size_t n_days() const noexcept { return calendar.size(); }
  std::size_t n_features() const noexcept { return feature_names.size(); }
  double at(std::size_t stock, std::size_t day, std::size_t f) const {
    return values[(stock * n_days() + day) * n_features() + f];
  }
  double& at(std::size_t stock, std::size_t day, std::size_t f) {
    return values[(stock * n_days() + day) * n_features() + f];
  }

  friend bool operator==(const FeaturePanel&, const FeaturePanel&) = default;
};

struct NormalizationOptions {
  // Names of features to standardize; empty means all features. Features not
  // listed are copied through unchanged.
  std::vector<std::string> features;
};

struct SplitRatios {
  std::size_t train = 7;
  std::size_t valid = 1;
  std::size_t test = 2;
};

struct DatasetSplit {
  DayRange train;
  DayRange valid;
  DayRange test;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

ReturnPanel compute_returns(const PricePanel& panel);

// Per-day, per-feature z-score across stocks (population standard deviation).
// Masked cells are excluded from the statistics and stay masked. A day whose
// cross-sectional standard deviation is zero yields 0 for every present stock
// and records a warning.
FeaturePanel cross_sectional_normalize(const PricePanel& panel, const NormalizationOptions& options = {},
                                       Diagnostics* diagnostics = nullptr);
FeaturePanel cross_sectional_normalize(const FeaturePanel& panel, const NormalizationOptions& options = {},
                                       Diagnostics* diagnostics = nullptr);
FeaturePanel to_feature_panel(const PricePanel& panel);

// Contiguous, ordered train/valid/test ranges over [first_day, first_day+n_days).
// Train is rounded up, valid rounded down, test takes the remainder.
DatasetSplit split_chronological(std::size_t n_days, SplitRatios ratios = {}, std::size_t first_day = 0);

}  // namespace finbench
