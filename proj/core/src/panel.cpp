#include "finbench/panel.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>
#include <string>

namespace finbench {

namespace {

std::string cell_name(const PricePanel::Data& d, std::size_t stock, std::size_t day) {
  return "stock '" + d.stock_ids[stock] + "' on " + d.calendar[day];
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

PricePanel PricePanel::create(Data data) {
  const std::size_t n = data.stock_ids.size();
  const std::size_t t = data.calendar.size();
  const std::size_t f = data.feature_names.size();

  if (data.features.size() != n * t * f) {
    throw DataError("feature array has " + std::to_string(data.features.size()) + " values, expected " +
                    std::to_string(n * t * f));
  }
  if (data.tradability && data.tradability->size() != n * t) {
    throw DataError("tradability mask has wrong size");
  }
  for (std::size_t d = 1; d < t; ++d) {
    if (!(data.calendar[d - 1] < data.calendar[d])) {
      throw DataError("calendar is not strictly increasing at " + data.calendar[d]);
    }
  }
  {
    std::set<std::string> seen;
    for (const auto& id : data.stock_ids) {
      if (!seen.insert(id).second) throw DataError("duplicate stock id '" + id + "'");
    }
  }

  auto find = [&](std::string_view name) -> std::size_t {
    auto it = std::find(data.feature_names.begin(), data.feature_names.end(), name);
    if (it == data.feature_names.end()) throw DataError("required feature '" + std::string(name) + "' is missing");
    return static_cast<std::size_t>(it - data.feature_names.begin());
  };
  const std::size_t open = find("open");
  const std::size_t high = find("high");
  const std::size_t low = find("low");
  const std::size_t close = find("close");
  const std::size_t volume = find("volume");

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < t; ++d) {
      const double* cell = &data.features[(i * t + d) * f];
      for (std::size_t k : {open, high, low, close}) {
        if (std::isfinite(cell[k]) && cell[k] <= 0.0) {
          throw DataError("non-positive " + data.feature_names[k] + " for " + cell_name(data, i, d));
        }
        if (std::isinf(cell[k])) throw DataError("infinite " + data.feature_names[k] + " for " + cell_name(data, i, d));
      }
      if (std::isfinite(cell[volume]) && cell[volume] < 0.0) {
        throw DataError("negative volume for " + cell_name(data, i, d));
      }
      const double o = cell[open], h = cell[high], l = cell[low], c = cell[close];
      if (std::isfinite(h) && std::isfinite(l) && h < l) {
        throw DataError("high < low for " + cell_name(data, i, d));
      }
      if (std::isfinite(o) && std::isfinite(c) && std::isfinite(h) && std::isfinite(l)) {
        if (h < std::max(o, c) || l > std::min(o, c)) {
          throw DataError("open/close outside [low, high] for " + cell_name(data, i, d));
        }
      }
    }
  }
  // Canonical form: one NaN bit pattern, and absent cells are never tradable.
  for (double& v : data.features) {
    if (std::isnan(v)) v = kMissing;
  }
  if (data.tradability) {
    for (std::size_t i = 0; i < n * t; ++i) {
      if (!std::isfinite(data.features[i * f + close])) (*data.tradability)[i] = 0;
    }
  }
  return PricePanel(std::move(data), close);
}

std::optional<std::size_t> PricePanel::feature_index(std::string_view name) const {
  auto it = std::find(data_.feature_names.begin(), data_.feature_names.end(), name);
  if (it == data_.feature_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - data_.feature_names.begin());
}

PricePanel PricePanel::select_stocks(std::span<const std::size_t> stocks) const {
  Data out;
  out.calendar = data_.calendar;
  out.feature_names = data_.feature_names;
  const std::size_t row = n_days() * n_features();
  std::vector<std::size_t> order(stocks.begin(), stocks.end());
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data_.stock_ids[a] < data_.stock_ids[b]; });
  if (data_.tradability) out.tradability.emplace();
  for (std::size_t i : order) {
    if (i >= n_stocks()) throw DataError("stock index out of range");
    out.stock_ids.push_back(data_.stock_ids[i]);
    out.features.insert(out.features.end(), data_.features.begin() + static_cast<std::ptrdiff_t>(i * row),
                        data_.features.begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
    if (data_.tradability) {
      out.tradability->insert(out.tradability->end(),
                              data_.tradability->begin() + static_cast<std::ptrdiff_t>(i * n_days()),
                              data_.tradability->begin() + static_cast<std::ptrdiff_t>((i + 1) * n_days()));
    }
  }
  return PricePanel(std::move(out), close_);
}

PricePanel PricePanel::slice_days(DayRange days) const {
  if (days.end > n_days() || days.begin > days.end) throw DataError("day range outside panel");
  Data out;
  out.stock_ids = data_.stock_ids;
  out.feature_names = data_.feature_names;
  out.calendar.assign(data_.calendar.begin() + static_cast<std::ptrdiff_t>(days.begin),
                      data_.calendar.begin() + static_cast<std::ptrdiff_t>(days.end));
  const std::size_t f = n_features();
  if (data_.tradability) out.tradability.emplace();
  for (std::size_t i = 0; i < n_stocks(); ++i) {
    const auto from = data_.features.begin() + static_cast<std::ptrdiff_t>((i * n_days() + days.begin) * f);
    out.features.insert(out.features.end(), from, from + static_cast<std::ptrdiff_t>(days.size() * f));
    if (data_.tradability) {
      const auto m = data_.tradability->begin() + static_cast<std::ptrdiff_t>(i * n_days() + days.begin);
      out.tradability->insert(out.tradability->end(), m, m + static_cast<std::ptrdiff_t>(days.size()));
    }
  }
  return PricePanel(std::move(out), close_);
}

bool operator==(const PricePanel& a, const PricePanel& b) {
  return a.data_.stock_ids == b.data_.stock_ids && a.data_.calendar == b.data_.calendar &&
         a.data_.feature_names == b.data_.feature_names && a.data_.tradability == b.data_.tradability &&
         same_bits(a.data_.features, b.data_.features);
}

ReturnPanel compute_returns(const PricePanel& panel) {
  if (panel.n_days() < 2) throw DataError("compute_returns needs at least 2 days");
  ReturnPanel out(panel.n_stocks(), panel.n_days());
  for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
    for (std::size_t t = 1; t < panel.n_days(); ++t) {
      const double prev = panel.close(i, t - 1);
      const double cur = panel.close(i, t);
      if (std::isfinite(prev) && std::isfinite(cur) && prev != 0.0) out.set(i, t, (cur - prev) / prev);
    }
  }
  return out;
}

FeaturePanel to_feature_panel(const PricePanel& panel) {
  return FeaturePanel{panel.stock_ids(), panel.calendar(), panel.feature_names(), panel.raw()};
}

FeaturePanel cross_sectional_normalize(const PricePanel& panel, const NormalizationOptions& options,
                                       Diagnostics* diagnostics) {
  return cross_sectional_normalize(to_feature_panel(panel), options, diagnostics);
}

FeaturePanel cross_sectional_normalize(const FeaturePanel& panel, const NormalizationOptions& options,
                                       Diagnostics* diagnostics) {
  FeaturePanel out = panel;
  std::vector<std::size_t> targets;
  if (options.features.empty()) {
    for (std::size_t f = 0; f < panel.n_features(); ++f) targets.push_back(f);
  } else {
    for (const auto& name : options.features) {
      auto it = std::find(panel.feature_names.begin(), panel.feature_names.end(), name);
      if (it == panel.feature_names.end()) throw ConfigError("cannot normalize unknown feature '" + name + "'");
      targets.push_back(static_cast<std::size_t>(it - panel.feature_names.begin()));
    }
  }

  const std::size_t n = panel.n_stocks();
  for (std::size_t t = 0; t < panel.n_days(); ++t) {
    for (std::size_t f : targets) {
      std::size_t count = 0;
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = panel.at(i, t, f);
        if (std::isfinite(v)) {
          mean += v;
          ++count;
        }
      }
      if (count == 0) continue;
      mean /= static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = panel.at(i, t, f);
        if (std::isfinite(v)) ss += (v - mean) * (v - mean);
      }
      const double sd = std::sqrt(ss / static_cast<double>(count));
      // Relative cutoff so a cross-section that is constant up to rounding is
      // treated as degenerate.
      const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
      if (degenerate && diagnostics) {
        diagnostics->warn("zero cross-sectional deviation for feature '" + panel.feature_names[f] + "' on " +
                          panel.calendar[t] + "; set to 0");
      }
      for (std::size_t i = 0; i < n; ++i) {
        double& v = out.at(i, t, f);
        if (!std::isfinite(v)) continue;
        v = degenerate ? 0.0 : (v - mean) / sd;
      }
    }
  }
  return out;
}

DatasetSplit split_chronological(std::size_t n_days, SplitRatios ratios, std::size_t first_day) {
  const std::size_t total = ratios.train + ratios.valid + ratios.test;
  if (ratios.train == 0 || ratios.valid == 0 || ratios.test == 0) throw ConfigError("split ratios must be positive");
  const std::size_t train = (n_days * ratios.train + total - 1) / total;
  const std::size_t valid = n_days * ratios.valid / total;
  if (train + valid >= n_days || valid == 0) {
    throw DataError("cannot split " + std::to_string(n_days) + " days into non-empty train/valid/test ranges");
  }
  const std::size_t test = n_days - train - valid;
  DatasetSplit s;
  s.train = {first_day, first_day + train};
  s.valid = {s.train.end, s.train.end + valid};
  s.test = {s.valid.end, s.valid.end + test};
  return s;
}

}  // namespace finbench
