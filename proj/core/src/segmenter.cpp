#include "finbench/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "finbench/panel_io.hpp"

namespace finbench {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

bool is_black_swan(const std::vector<double>& r, double z_threshold, double cap) {
  if (r.empty()) return false;
  const double med = median_of(r);
  std::vector<double> dev(r.size());
  std::transform(r.begin(), r.end(), dev.begin(), [med](double x) { return std::abs(x - med); });
  const double mad = median_of(dev);
  if (mad == 0.0) {
    return std::any_of(r.begin(), r.end(), [cap](double x) { return std::abs(x) > cap; });
  }
  const double scale = 1.4826 * mad;
  return std::any_of(dev.begin(), dev.end(), [&](double d) { return d / scale > z_threshold; });
}

}  // namespace

std::string_view to_string(MovementPattern p) {
  switch (p) {
    case MovementPattern::Uptrend:
      return "uptrend";
    case MovementPattern::Downtrend:
      return "downtrend";
    case MovementPattern::Volatile:
      return "volatile";
    case MovementPattern::Extreme:
      return "extreme";
  }
  return "unknown";
}

MovementPattern parse_pattern(std::string_view name) {
  for (auto p : kAllPatterns) {
    if (to_string(p) == name) return p;
  }
  throw DataError("unknown movement pattern '" + std::string(name) + "'");
}

SegmentCut cut_segments(std::size_t n_days, std::size_t segment_len) {
  if (segment_len == 0) throw ConfigError("segment length must be positive");
  if (n_days < segment_len) {
    throw DataError(std::to_string(n_days) + " days is shorter than one " + std::to_string(segment_len) +
                    "-day segment");
  }
  SegmentCut cut;
  const std::size_t count = n_days / segment_len;
  for (std::size_t k = 0; k < count; ++k) cut.segments.push_back({k * segment_len, (k + 1) * segment_len});
  cut.discarded_days = n_days - count * segment_len;
  return cut;
}

std::vector<double> segment_returns(const ReturnPanel& returns, std::size_t stock, Segment segment) {
  if (segment.end > returns.n_days()) throw DataError("segment exceeds panel range");
  std::vector<double> out;
  for (std::size_t t = segment.begin + 1; t < segment.end; ++t) {
    if (returns.valid(stock, t)) out.push_back(returns.value(stock, t));
  }
  return out;
}

std::vector<std::size_t> flag_black_swans(const ReturnPanel& returns, Segment segment, double z_threshold,
                                          double mad_fallback_cap) {
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < returns.n_stocks(); ++i) {
    if (is_black_swan(segment_returns(returns, i, segment), z_threshold, mad_fallback_cap)) flagged.push_back(i);
  }
  return flagged;
}

std::vector<std::string> SegmentLabeling::members(MovementPattern p) const {
  std::vector<std::string> out;
  for (const auto& [id, label] : labels) {
    if (label == p) out.push_back(id);
  }
  return out;
}

SegmentLabeling classify_segment(const ReturnPanel& returns, std::span<const std::string> stock_ids, Segment segment,
                                 const SegmentOptions& options) {
  if (stock_ids.size() != returns.n_stocks()) throw DataError("stock id count does not match return panel");
  if (options.cohort_size == 0) throw ConfigError("cohort_size must be positive");

  SegmentLabeling out;
  out.segment = segment;

  struct Ranked {
    std::size_t stock;
    double score;
  };
  std::vector<Ranked> eligible;
  for (std::size_t i = 0; i < returns.n_stocks(); ++i) {
    const auto r = segment_returns(returns, i, segment);
    if (r.empty()) continue;
    double growth = 1.0;
    for (double x : r) growth *= 1.0 + x;
    const double score = growth - 1.0;
    out.scores[stock_ids[i]] = score;
    if (is_black_swan(r, options.z_threshold, options.mad_fallback_cap)) {
      out.labels[stock_ids[i]] = MovementPattern::Extreme;
    } else {
      eligible.push_back({i, score});
    }
  }
  if (eligible.size() < 3) {
    throw DataError("segment starting at day " + std::to_string(segment.begin) + " has only " +
                    std::to_string(eligible.size()) + " non-extreme stocks; need at least 3");
  }
  std::sort(eligible.begin(), eligible.end(), [&](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return stock_ids[a.stock] < stock_ids[b.stock];
  });

  const std::size_t k = eligible.size();
  std::size_t cohort = options.cohort_size;
  if (k < 3 * cohort) {
    out.shortfall = CohortShortfall{cohort, k / 3, k};
    cohort = k / 3;
  }
  const std::size_t band = (k - cohort) / 2;
  for (std::size_t r = 0; r < k; ++r) {
    const auto& id = stock_ids[eligible[r].stock];
    if (r < cohort) {
      out.labels[id] = MovementPattern::Uptrend;
    } else if (r >= k - cohort) {
      out.labels[id] = MovementPattern::Downtrend;
    } else if (r >= band && r < band + cohort) {
      out.labels[id] = MovementPattern::Volatile;
    }
  }
  return out;
}

void write_labeling_csv(std::ostream& out, std::span<const SegmentLabeling> labelings) {
  out << "segment_start,stock_id,pattern,score\n";
  for (const auto& lab : labelings) {
    for (const auto& [id, pattern] : lab.labels) {
      out << lab.segment.begin << ',' << id << ',' << to_string(pattern) << ',' << format_double(lab.scores.at(id))
          << '\n';
    }
  }
}

std::vector<SegmentLabeling> read_labeling_csv(std::istream& in, std::size_t segment_len) {
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"segment_start", "stock_id", "pattern", "score"}) {
    throw DataError("labeling CSV must start with segment_start,stock_id,pattern,score");
  }
  std::map<std::size_t, SegmentLabeling> by_start;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError("labeling line " + std::to_string(line_no) + ": expected 4 fields");
    std::size_t start = 0;
    try {
      start = std::stoul(f[0]);
    } catch (const std::exception&) {
      throw DataError("labeling line " + std::to_string(line_no) + ": bad segment_start");
    }
    auto& lab = by_start[start];
    lab.segment = {start, start + segment_len};
    lab.labels[f[1]] = parse_pattern(f[2]);
    lab.scores[f[1]] = f[3].empty() ? kMissing : std::stod(f[3]);
  }
  std::vector<SegmentLabeling> out;
  for (auto& [start, lab] : by_start) out.push_back(std::move(lab));
  return out;
}

}  // namespace finbench
