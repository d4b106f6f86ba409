#pragma once

#include <filesystem>
#include <iosfwd>

#include "finbench/panel.hpp"

namespace finbench {

// Long:  stock_id,date,open,high,low,close,volume[,<extra features>...][,tradable]
//        one row per (stock, day); rows of a stock must have increasing dates.
// Wide:  date,field,<stock_1>,...,<stock_N>
//        one row per (day, field); field is a feature name or "tradable".
// Empty fields are missing values. Dates are ISO-8601 (YYYY-MM-DD).
enum class CsvFormat { Long, Wide };

PricePanel load_panel(const std::filesystem::path& path, CsvFormat format = CsvFormat::Long);
PricePanel read_panel_csv(std::istream& in, CsvFormat format = CsvFormat::Long);

// Values are written in shortest round-trip form, so load(save(p)) == p.
void save_panel(const PricePanel& panel, const std::filesystem::path& path, CsvFormat format = CsvFormat::Long);
void write_panel_csv(const PricePanel& panel, std::ostream& out, CsvFormat format = CsvFormat::Long);

// Binary cache, little-endian:
//   magic "FBPANEL\0" | u32 version | u64 N | u64 T | u64 F
//   string tables (u32 length + bytes): N stock ids, T dates, F feature names
//   u8 has_tradability [+ N*T u8 mask]
//   N*T*F f64 row-major [stock][day][feature]
inline constexpr std::uint32_t kPanelCacheVersion = 1;
void save_panel_binary(const PricePanel& panel, const std::filesystem::path& path);
PricePanel load_panel_binary(const std::filesystem::path& path);

// Parses a CSV line on commas; strips a trailing '\r'.
std::vector<std::string> split_csv_line(std::string_view line);
std::string format_double(double v);
bool is_iso_date(std::string_view s);

}  // namespace finbench
