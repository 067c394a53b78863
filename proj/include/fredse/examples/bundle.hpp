#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fredse/bilevel.hpp"
#include "fredse/data.hpp"
#include "fredse/fredholm.hpp"
#include "fredse/nn.hpp"

namespace fredse {

inline double expit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double normal_pdf(double z) {
  constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

/// Prefix marking simulation ground-truth columns in exported datasets.
inline constexpr const char* kTruthPrefix = "_truth_";

/*
 * One simulated dataset. `observed` is all an estimator may read; `truth`
 * holds the hidden columns (same row order) for oracle comparators and
 * diagnostics only.
 */
struct SimulatedData {
  Dataset observed;
  Dataset truth;
};

/// Reference estimator computed straight from a simulated dataset.
using Comparator = std::function<std::vector<double>(const SimulatedData&)>;

struct ExampleBundle {
  std::string name;
  FredholmProblem problem;
  EstimatingEquation psi;
  std::vector<double> beta_star;
  NetworkArch arch;
  BiLevelConfig config;
  std::size_t default_n;
  std::function<SimulatedData(std::size_t n, std::uint64_t seed)> generate;
  std::map<std::string, Comparator> comparators;
};

/// CSV with observed columns first, then truth columns prefixed "_truth_". Missing values are "NA".
void write_dataset_csv(std::ostream& os, const SimulatedData& data);
/// Splits "_truth_" columns back into `truth`.
SimulatedData read_dataset_csv(std::istream& is);
/// Estimator-facing loader: truth columns are dropped.
Dataset read_observed_csv(std::istream& is);

/// Ordinary least squares of y on the columns of X; throws NumericError when X is rank deficient.
Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

}  // namespace fredse
