#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace fredse {

struct SolverSummary {
  std::string solver;
  int rows = 0;
  int converged = 0;
  double convergence_rate = 0.0;
  std::vector<int> used;  // rows with a finite bias, per coordinate
  std::vector<double> mean_bias;
  std::vector<double> sd_bias;  // sample standard deviation (n - 1); NaN below two values
  std::vector<double> mean_beta;
  double mean_iterations = 0.0;
  double mean_wall_ms = 0.0;
};

/// Summaries in order of first appearance of each solver label.
struct Summary {
  std::string example;
  std::vector<SolverSummary> solvers;
};

/// Reads a simulation CSV; throws ParseError naming a missing or malformed column.
Summary summarize_csv(std::istream& is);
Summary summarize_file(const std::string& path);

std::string summary_text(const Summary& s);
nlohmann::ordered_json summary_to_json(const Summary& s);

}  // namespace fredse
