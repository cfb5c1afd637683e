#pragma once

// Text helpers shared by every file format the toolkit reads and writes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace loopmem {

// 17 significant digits: enough for every double to round-trip exactly.
std::string format_double(double v);
std::string format_doubles(const std::vector<double>& v, char sep = ' ');

std::string_view trim(std::string_view s);
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_integer(std::string_view s);
std::optional<bool> parse_bool(std::string_view s);
std::optional<std::vector<double>> parse_double_list(std::string_view s);

// Splits "key = value"; nullopt when the line has no '='.
std::optional<std::pair<std::string, std::string>> split_key_value(std::string_view line);

// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// Delimiter-separated table: '#' provenance comments, one header line, rows.
struct Table {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws if absent
  double number(std::size_t row, std::string_view name) const;
  const std::string& cell(std::size_t row, std::string_view name) const;
  void add_row(std::vector<std::string> row);
};

void write_table(const Table& table, std::ostream& out);
Table read_table(std::istream& in, const std::string& name = {});
Table load_table(const std::filesystem::path& path);
void save_table(const Table& table, const std::filesystem::path& path);

// FNV-1a, used for config provenance hashes.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace loopmem
