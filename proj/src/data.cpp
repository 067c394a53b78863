#include "fredse/data.hpp"

#include <algorithm>

#include "fredse/error.hpp"

namespace fredse {

Dataset::Dataset(std::vector<std::string> columns) : columns_(std::move(columns)) {}

std::size_t Dataset::column_index(const std::string& name) const {
  auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw ConfigError(name, "dataset has no such column");
  return static_cast<std::size_t>(it - columns_.begin());
}

bool Dataset::has_column(const std::string& name) const {
  return std::find(columns_.begin(), columns_.end(), name) != columns_.end();
}

void Dataset::add_row(std::span<const double> row) {
  if (row.size() != width()) throw ShapeError("row has " + std::to_string(row.size()) + " fields, expected " + std::to_string(width()));
  values_.insert(values_.end(), row.begin(), row.end());
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out(columns_);
  out.values_.reserve(rows.size() * width());
  for (auto r : rows) {
    if (r >= size()) throw ShapeError("row index out of range");
    auto obs = row(r);
    out.values_.insert(out.values_.end(), obs.begin(), obs.end());
  }
  return out;
}

}  // namespace fredse
