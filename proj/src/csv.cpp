#include "fredse/util/csv.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "fredse/error.hpp"

namespace fredse {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::string_view view(line);
  if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = view.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(view.substr(start));
      break;
    }
    out.emplace_back(view.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_csv_double(const std::string& column, const std::string& text) {
  if (text == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last || text.empty()) throw ParseError(column, "not a number: '" + text + "'");
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError(name, "missing column");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw ParseError("", "empty CSV input");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != t.header.size()) {
      throw ParseError("", "line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                               " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

}  // namespace fredse
