#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finbench/panel.hpp"

namespace finbench {

enum class MovementPattern { Uptrend, Downtrend, Volatile, Extreme };

inline constexpr MovementPattern kAllPatterns[] = {MovementPattern::Uptrend, MovementPattern::Downtrend,
                                                   MovementPattern::Volatile, MovementPattern::Extreme};

std::string_view to_string(MovementPattern p);
MovementPattern parse_pattern(std::string_view name);

// [start, end) in panel day indices.
using Segment = DayRange;

struct SegmentCut {
  std::vector<Segment> segments;
  std::size_t discarded_days = 0;
};

// Maximal run of disjoint, consecutive windows of exactly segment_len days
// starting at day 0; the trailing remainder is discarded and reported.
SegmentCut cut_segments(std::size_t n_days, std::size_t segment_len = 250);

struct SegmentOptions {
  std::size_t cohort_size = 300;
  double z_threshold = 5.0;
  // Used when a stock's MAD is zero: flag iff any |r| exceeds this.
  double mad_fallback_cap = 0.15;
};

// Returns within a segment use only prices inside it, so the segment's first
// day contributes no return.
std::vector<double> segment_returns(const ReturnPanel& returns, std::size_t stock, Segment segment);

// Robust z-score |r - median| / (1.4826 MAD) over the stock's own returns in
// the segment. Returns flagged stock indices in ascending order.
std::vector<std::size_t> flag_black_swans(const ReturnPanel& returns, Segment segment, double z_threshold = 5.0,
                                          double mad_fallback_cap = 0.15);

struct CohortShortfall {
  std::size_t requested = 0;
  std::size_t granted = 0;
  std::size_t eligible = 0;
};

struct SegmentLabeling {
  Segment segment;
  std::map<std::string, MovementPattern> labels;
  // Segment cumulative return prod(1 + r) - 1 for every stock with data in the
  // segment, labeled or not.
  std::map<std::string, double> scores;
  std::optional<CohortShortfall> shortfall;

  std::vector<std::string> members(MovementPattern p) const;
};

// Black swans become Extreme; the rest are ranked by cumulative return
// (descending, ties by stock id). Top cohort -> Uptrend, bottom cohort ->
// Downtrend, a cohort centred on the median rank -> Volatile. When fewer than
// 3 * cohort_size stocks are eligible the cohort shrinks to eligible / 3 and a
// shortfall is recorded.
SegmentLabeling classify_segment(const ReturnPanel& returns, std::span<const std::string> stock_ids, Segment segment,
                                 const SegmentOptions& options = {});

// CSV columns: segment_start,stock_id,pattern,score
void write_labeling_csv(std::ostream& out, std::span<const SegmentLabeling> labelings);
std::vector<SegmentLabeling> read_labeling_csv(std::istream& in, std::size_t segment_len);

}  // namespace finbench
