#include "loopmem/text_io.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "loopmem/errors.hpp"

namespace loopmem {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_doubles(const std::vector<double>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += sep;
    }
    out += format_double(v[i]);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) {
    return std::nullopt;
  }
  // from_chars rejects a leading '+', strtod-style inputs may carry one.
  if (s.front() == '+') {
    s.remove_prefix(1);
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // Accept the spellings printf produces for non-finite values.
    if (s == "inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
    if (s == "-inf" || s == "-infinity") {
      return -std::numeric_limits<double>::infinity();
    }
    if (s == "nan" || s == "-nan") {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return std::nullopt;
  }
  return v;
}

std::optional<long long> parse_integer(std::string_view s) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

std::optional<bool> parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    return false;
  }
  return std::nullopt;
}

std::optional<std::vector<double>> parse_double_list(std::string_view s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto next = s.find_first_of(" ,\t", pos);
    const auto token = trim(s.substr(pos, next == std::string_view::npos ? s.npos : next - pos));
    if (!token.empty()) {
      const auto v = parse_double(token);
      if (!v) {
        return std::nullopt;
      }
      out.push_back(*v);
    }
    if (next == std::string_view::npos) {
      break;
    }
    pos = next + 1;
  }
  return out;
}

std::optional<std::pair<std::string, std::string>> split_key_value(std::string_view line) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    return std::nullopt;
  }
  return std::make_pair(std::string(trim(line.substr(0, eq))),
                        std::string(trim(line.substr(eq + 1))));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    }
    out << contents;
    out.flush();
    if (!out) {
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) {
      return i;
    }
  }
  throw std::out_of_range("table has no column '" + std::string(name) + "'");
}

const std::string& Table::cell(std::size_t row, std::string_view name) const {
  return rows.at(row).at(column(name));
}

double Table::number(std::size_t row, std::string_view name) const {
  const auto v = parse_double(cell(row, name));
  if (!v) {
    throw std::runtime_error("table cell '" + std::string(name) + "' in row " +
                             std::to_string(row) + " is not numeric");
  }
  return *v;
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) {
    throw std::invalid_argument("Table::add_row: row width does not match the header");
  }
  rows.push_back(std::move(row));
}

void write_table(const Table& table, std::ostream& out) {
  for (const auto& c : table.comments) {
    out << "# " << c << '\n';
  }
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out << (i ? "\t" : "") << table.columns[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "\t" : "") << row[i];
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find('\t', pos);
    out.emplace_back(line.substr(pos, next == std::string_view::npos ? line.npos : next - pos));
    if (next == std::string_view::npos) {
      break;
    }
    pos = next + 1;
  }
  return out;
}

}  // namespace

Table read_table(std::istream& in, const std::string& name) {
  Table table;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    if (line.front() == '#') {
      auto c = std::string_view(line).substr(1);
      if (!c.empty() && c.front() == ' ') {
        c.remove_prefix(1);
      }
      table.comments.emplace_back(c);
      continue;
    }
    auto cells = split_tabs(line);
    if (!have_header) {
      table.columns = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.columns.size()) {
      throw ParseError(name, line_no,
                       "expected " + std::to_string(table.columns.size()) + " cells, found " +
                           std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) {
    throw ParseError(name, 0, "table has no header line");
  }
  return table;
}

Table load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return read_table(in, path.string());
}

void save_table(const Table& table, const std::filesystem::path& path) {
  std::ostringstream out;
  write_table(table, out);
  write_file_atomic(path, out.str());
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace loopmem
