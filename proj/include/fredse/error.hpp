#pragma once

#include <stdexcept>
#include <string>

namespace fredse {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array/vector dimensions disagree with what an architecture or problem expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite or otherwise unusable number turned up during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or configuration text. `key_path` names the
/// offending entry when there is one (e.g. "solver.width").
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV input; `column` names the column that failed to parse.
class ParseError : public Error {
 public:
  ParseError(std::string column, const std::string& what)
      : Error(column.empty() ? what : "column '" + column + "': " + what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

}  // namespace fredse
