#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fredse {

/// One observation as the estimators see it: a row of named real fields.
using Obs = std::span<const double>;

/*
 * Row-major table of observations with named columns. Estimator-facing
 * datasets carry only observed fields; simulation ground truth lives in the
 * example-specific record types and is never copied in here.
 */
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<std::string> columns);

  std::size_t size() const noexcept { return width() == 0 ? 0 : values_.size() / width(); }
  bool empty() const noexcept { return size() == 0; }
  std::size_t width() const noexcept { return columns_.size(); }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  /// Index of a column; throws ConfigError if absent.
  std::size_t column_index(const std::string& name) const;
  bool has_column(const std::string& name) const;

  void add_row(std::span<const double> row);
  Obs row(std::size_t i) const { return Obs(values_.data() + i * width(), width()); }
  double at(std::size_t i, std::size_t col) const { return values_[i * width() + col]; }

  /// Rows in the given order (used for permutation invariance checks and subsetting).
  Dataset select(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> columns_;
  std::vector<double> values_;
};

}  // namespace fredse
