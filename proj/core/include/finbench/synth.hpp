#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "finbench/panel.hpp"
#include "finbench/segmenter.hpp"

namespace finbench {

// Log-return model x_t = drift + ar1 * x_{t-1} + vol * eps_t + jump_t.
struct RegimeSpec {
  MovementPattern pattern = MovementPattern::Volatile;
  double daily_drift = 0.0;
  double daily_vol = 0.01;
  double jump_prob = 0.0;
  double jump_scale = 0.0;
  double ar1_coeff = 0.0;

  // Throws ConfigError. A zero vol is accepted only for fully flat paths.
  void validate() const;
};

// Preset regimes used by generate_pattern_panel.
RegimeSpec preset_regime(MovementPattern pattern);

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Business days (Mon-Fri) as ISO dates starting at 2010-01-04.
std::vector<std::string> business_calendar(std::size_t n_days, const std::string& first = "2010-01-04");
std::string synthetic_stock_id(std::size_t index);

// Close = 100 * exp(cumsum x). Deterministic in (regimes, seed).
PricePanel generate_panel(std::size_t n_stocks, std::size_t n_days, const std::vector<RegimeSpec>& regimes,
                          std::uint64_t seed);

struct SyntheticDataset {
  PricePanel panel;
  std::map<std::string, MovementPattern> truth;
};

// 4 * cohort_size stocks, one cohort per pattern, patterns shuffled over ids.
SyntheticDataset generate_pattern_panel(std::size_t cohort_size, std::uint64_t seed, std::size_t n_days = 250);

// Columns: stock_id,pattern
void write_truth_csv(std::ostream& out, const std::map<std::string, MovementPattern>& truth);
std::map<std::string, MovementPattern> read_truth_csv(std::istream& in);

}  // namespace finbench
