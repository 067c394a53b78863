#include "fredse/examples/bundle.hpp"

#include <istream>
#include <ostream>

#include "fredse/error.hpp"
#include "fredse/util/csv.hpp"
#include "fredse/util/format.hpp"

namespace fredse {

void write_dataset_csv(std::ostream& os, const SimulatedData& data) {
  const Dataset& o = data.observed;
  const Dataset& t = data.truth;
  if (t.width() > 0 && t.size() != o.size()) throw ShapeError("truth and observed tables differ in length");
  bool first = true;
  for (const auto& c : o.columns()) {
    os << (first ? "" : ",") << c;
    first = false;
  }
  for (const auto& c : t.columns()) {
    os << (first ? "" : ",") << kTruthPrefix << c;
    first = false;
  }
  os << '\n';
  for (std::size_t i = 0; i < o.size(); ++i) {
    first = true;
    for (std::size_t c = 0; c < o.width(); ++c) {
      os << (first ? "" : ",") << format_double(o.at(i, c));
      first = false;
    }
    for (std::size_t c = 0; c < t.width(); ++c) {
      os << (first ? "" : ",") << format_double(t.at(i, c));
      first = false;
    }
    os << '\n';
  }
}

SimulatedData read_dataset_csv(std::istream& is) {
  const CsvTable table = read_csv(is);
  const std::string prefix = kTruthPrefix;
  std::vector<std::string> obs_cols, truth_cols;
  std::vector<std::size_t> obs_idx, truth_idx;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (name.rfind(prefix, 0) == 0) {
      truth_cols.push_back(name.substr(prefix.size()));
      truth_idx.push_back(c);
    } else {
      obs_cols.push_back(name);
      obs_idx.push_back(c);
    }
  }
  SimulatedData out{Dataset(obs_cols), Dataset(truth_cols)};
  std::vector<double> row;
  for (const auto& fields : table.rows) {
    row.clear();
    for (auto c : obs_idx) row.push_back(parse_csv_double(table.header[c], fields[c]));
    out.observed.add_row(row);
    if (!truth_idx.empty()) {
      row.clear();
      for (auto c : truth_idx) row.push_back(parse_csv_double(table.header[c], fields[c]));
      out.truth.add_row(row);
    }
  }
  return out;
}

Dataset read_observed_csv(std::istream& is) { return read_dataset_csv(is).observed; }

Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size() || X.rows() < X.cols()) throw NumericError("least squares needs at least as many rows as columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) throw NumericError("least-squares design is singular");
  return qr.solve(y);
}

}  // namespace fredse
