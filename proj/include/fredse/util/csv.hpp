#pragma once

#include <istream>
#include <string>
#include <vector>

namespace fredse {

/// Fields of one comma-separated line (no quoting; a trailing CR is dropped).
std::vector<std::string> split_csv_line(const std::string& line);

/// Parses a decimal number; "NA" gives NaN. Throws ParseError naming `column`.
double parse_csv_double(const std::string& column, const std::string& text);

/// Reads the header and all rows; every row must have the header's width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // ParseError when absent
};
CsvTable read_csv(std::istream& is);

}  // namespace fredse
