#include "finbench/panel_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace finbench {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'B', 'P', 'A', 'N', 'E', 'L', '\0'};

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
  if (field.empty()) return kMissing;
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse " + std::string(column) + " value '" +
                    std::string(field) + "'");
  }
  return v;
}

std::uint8_t parse_flag(std::string_view field, std::size_t line_no) {
  if (field == "1" || field == "true") return 1;
  if (field == "0" || field == "false" || field.empty()) return 0;
  throw DataError("line " + std::to_string(line_no) + ": tradable flag must be 0/1, got '" + std::string(field) + "'");
}

struct Cell {
  std::vector<double> values;
  std::uint8_t tradable = 1;
};

// Assembles a panel from (stock, date) -> cell records.
PricePanel assemble(const std::vector<std::string>& feature_names, std::map<std::string, std::map<std::string, Cell>>& rows,
                    bool has_tradable) {
  PricePanel::Data data;
  data.feature_names = feature_names;
  std::vector<std::string> calendar;
  for (const auto& [id, days] : rows) {
    data.stock_ids.push_back(id);
    for (const auto& [date, cell] : days) calendar.push_back(date);
  }
  std::sort(calendar.begin(), calendar.end());
  calendar.erase(std::unique(calendar.begin(), calendar.end()), calendar.end());
  data.calendar = calendar;

  const std::size_t n = data.stock_ids.size();
  const std::size_t t = calendar.size();
  const std::size_t f = feature_names.size();
  data.features.assign(n * t * f, kMissing);
  if (has_tradable) data.tradability.emplace(n * t, 0);

  std::size_t i = 0;
  for (auto& [id, days] : rows) {
    for (auto& [date, cell] : days) {
      const auto d = static_cast<std::size_t>(std::lower_bound(calendar.begin(), calendar.end(), date) - calendar.begin());
      std::copy(cell.values.begin(), cell.values.end(), data.features.begin() + static_cast<std::ptrdiff_t>((i * t + d) * f));
      if (has_tradable) (*data.tradability)[i * t + d] = cell.tradable;
    }
    ++i;
  }
  return PricePanel::create(std::move(data));
}

PricePanel read_long(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("empty panel file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "stock_id" || header[1] != "date") {
    throw DataError("line 1: long-format header must start with stock_id,date");
  }
  std::vector<std::string> features;
  std::optional<std::size_t> tradable_col;
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] == "tradable") {
      tradable_col = c;
    } else {
      features.push_back(header[c]);
    }
  }

  std::map<std::string, std::map<std::string, Cell>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    const std::string& date = fields[1];
    if (id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty stock_id");
    if (!is_iso_date(date)) throw DataError("line " + std::to_string(line_no) + ": malformed date '" + date + "'");

    auto& days = rows[id];
    if (!days.empty()) {
      const auto& last = days.rbegin()->first;
      if (date == last || days.count(date)) {
        throw DataError("line " + std::to_string(line_no) + ": duplicate row for stock '" + id + "' on " + date);
      }
      if (date < last) {
        throw DataError("line " + std::to_string(line_no) + ": dates for stock '" + id + "' are not increasing (" +
                        date + " after " + last + ")");
      }
    }
    Cell cell;
    for (std::size_t c = 2; c < header.size(); ++c) {
      if (tradable_col && c == *tradable_col) {
        cell.tradable = parse_flag(fields[c], line_no);
      } else {
        cell.values.push_back(parse_number(fields[c], line_no, header[c]));
      }
    }
    days.emplace(date, std::move(cell));
  }
  try {
    return assemble(features, rows, tradable_col.has_value());
  } catch (const DataError& e) {
    throw DataError(std::string("invalid panel: ") + e.what());
  }
}

PricePanel read_wide(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("empty panel file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "date" || header[1] != "field") {
    throw DataError("line 1: wide-format header must start with date,field");
  }
  const std::vector<std::string> ids(header.begin() + 2, header.end());
  std::vector<std::string> features;
  bool has_tradable = false;
  // date -> field -> values across stocks
  std::map<std::string, std::map<std::string, std::vector<std::string>>> by_date;
  std::string last_date;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    const std::string date = fields[0];
    const std::string field = fields[1];
    if (!is_iso_date(date)) throw DataError("line " + std::to_string(line_no) + ": malformed date '" + date + "'");
    if (!last_date.empty() && date < last_date) {
      throw DataError("line " + std::to_string(line_no) + ": dates are not increasing (" + date + " after " + last_date + ")");
    }
    last_date = date;
    if (field == "tradable") {
      has_tradable = true;
    } else if (std::find(features.begin(), features.end(), field) == features.end()) {
      features.push_back(field);
    }
    auto& slot = by_date[date];
    if (slot.count(field)) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate field '" + field + "' on " + date);
    }
    slot.emplace(field, std::vector<std::string>(fields.begin() + 2, fields.end()));
  }

  std::map<std::string, std::map<std::string, Cell>> rows;
  for (const auto& [date, fields] : by_date) {
    for (std::size_t s = 0; s < ids.size(); ++s) {
      Cell cell;
      bool any = false;
      for (const auto& name : features) {
        auto it = fields.find(name);
        const double v = it == fields.end() ? kMissing : parse_number(it->second[s], 0, name);
        any = any || std::isfinite(v);
        cell.values.push_back(v);
      }
      if (auto it = fields.find("tradable"); it != fields.end()) cell.tradable = parse_flag(it->second[s], 0);
      if (any) rows[ids[s]].emplace(date, std::move(cell));
    }
  }
  for (const auto& id : ids) rows.try_emplace(id);
  try {
    return assemble(features, rows, has_tradable);
  } catch (const DataError& e) {
    throw DataError(std::string("invalid panel: ") + e.what());
  }
}

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated panel cache");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw DataError("truncated panel cache");
  return s;
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return {};
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t k : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[k] < '0' || s[k] > '9') return false;
  }
  const auto digits = [&](std::size_t from, std::size_t n) {
    int v = 0;
    for (std::size_t k = from; k < from + n; ++k) v = v * 10 + (s[k] - '0');
    return v;
  };
  const std::chrono::year_month_day ymd{std::chrono::year{digits(0, 4)},
                                        std::chrono::month{static_cast<unsigned>(digits(5, 2))},
                                        std::chrono::day{static_cast<unsigned>(digits(8, 2))}};
  return ymd.ok();
}

PricePanel read_panel_csv(std::istream& in, CsvFormat format) {
  return format == CsvFormat::Long ? read_long(in) : read_wide(in);
}

PricePanel load_panel(const std::filesystem::path& path, CsvFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file " + path.string());
  return read_panel_csv(in, format);
}

void write_panel_csv(const PricePanel& panel, std::ostream& out, CsvFormat format) {
  const std::size_t f = panel.n_features();
  if (format == CsvFormat::Long) {
    out << "stock_id,date";
    for (const auto& name : panel.feature_names()) out << ',' << name;
    if (panel.has_tradability_mask()) out << ",tradable";
    out << '\n';
    for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
      for (std::size_t t = 0; t < panel.n_days(); ++t) {
        bool any = false;
        for (std::size_t k = 0; k < f; ++k) any = any || std::isfinite(panel.feature(i, t, k));
        if (!any) continue;
        out << panel.stock_ids()[i] << ',' << panel.calendar()[t];
        for (std::size_t k = 0; k < f; ++k) out << ',' << format_double(panel.feature(i, t, k));
        if (panel.has_tradability_mask()) out << ',' << int((*panel.data().tradability)[i * panel.n_days() + t]);
        out << '\n';
      }
    }
    return;
  }
  out << "date,field";
  for (const auto& id : panel.stock_ids()) out << ',' << id;
  out << '\n';
  for (std::size_t t = 0; t < panel.n_days(); ++t) {
    for (std::size_t k = 0; k < f; ++k) {
      out << panel.calendar()[t] << ',' << panel.feature_names()[k];
      for (std::size_t i = 0; i < panel.n_stocks(); ++i) out << ',' << format_double(panel.feature(i, t, k));
      out << '\n';
    }
    if (panel.has_tradability_mask()) {
      out << panel.calendar()[t] << ",tradable";
      for (std::size_t i = 0; i < panel.n_stocks(); ++i) out << ',' << int((*panel.data().tradability)[i * panel.n_days() + t]);
      out << '\n';
    }
  }
}

void save_panel(const PricePanel& panel, const std::filesystem::path& path, CsvFormat format) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write panel file " + path.string());
  write_panel_csv(panel, out, format);
}

void save_panel_binary(const PricePanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write panel cache " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_pod<std::uint32_t>(out, kPanelCacheVersion);
  write_pod<std::uint64_t>(out, panel.n_stocks());
  write_pod<std::uint64_t>(out, panel.n_days());
  write_pod<std::uint64_t>(out, panel.n_features());
  for (const auto& s : panel.stock_ids()) write_string(out, s);
  for (const auto& s : panel.calendar()) write_string(out, s);
  for (const auto& s : panel.feature_names()) write_string(out, s);
  write_pod<std::uint8_t>(out, panel.has_tradability_mask() ? 1 : 0);
  if (panel.has_tradability_mask()) {
    const auto& mask = *panel.data().tradability;
    out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
  }
  const auto& raw = panel.raw();
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double)));
}

PricePanel load_panel_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open panel cache " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError("not a panel cache: " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kPanelCacheVersion) throw DataError("unsupported panel cache version " + std::to_string(version));
  const auto n = read_pod<std::uint64_t>(in);
  const auto t = read_pod<std::uint64_t>(in);
  const auto f = read_pod<std::uint64_t>(in);
  PricePanel::Data data;
  for (std::uint64_t k = 0; k < n; ++k) data.stock_ids.push_back(read_string(in));
  for (std::uint64_t k = 0; k < t; ++k) data.calendar.push_back(read_string(in));
  for (std::uint64_t k = 0; k < f; ++k) data.feature_names.push_back(read_string(in));
  if (read_pod<std::uint8_t>(in) != 0) {
    data.tradability.emplace(n * t);
    in.read(reinterpret_cast<char*>(data.tradability->data()), static_cast<std::streamsize>(n * t));
  }
  data.features.resize(n * t * f);
  in.read(reinterpret_cast<char*>(data.features.data()), static_cast<std::streamsize>(n * t * f * sizeof(double)));
  if (!in) throw DataError("truncated panel cache");
  return PricePanel::create(std::move(data));
}

}  // namespace finbench
