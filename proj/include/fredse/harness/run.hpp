#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fredse/bilevel.hpp"
#include "fredse/harness/config.hpp"
#include "json.hpp"

namespace fredse {

/// One (replication, solver) result. NaN marks a missing value.
struct SimulationRow {
  std::string example;
  int rep = 0;
  std::uint64_t seed = 0;
  std::string solver;
  std::vector<double> beta;
  std::vector<double> bias;  // beta - beta_star
  std::optional<int> iterations;
  bool converged = false;
  double loss_psi = 0.0;
  double loss_K = 0.0;
  double wall_ms = 0.0;
};

/// Worker count: FREDSE_THREADS when set to a positive integer, else the logical core count.
int thread_count();

/// Labels in row order for one replication: the configured solver, then the comparators.
std::vector<std::string> solver_labels(const RunConfig& cfg);

/*
 * Runs every replication (seed = base_seed + rep) and returns rows ordered
 * by (rep, label). A replication whose solver fails numerically yields a
 * row with NA estimates and converged = false.
 */
std::vector<SimulationRow> simulate(const RunConfig& cfg);

void write_rows_csv(std::ostream& os, const std::vector<SimulationRow>& rows, int q);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

/// One estimation run on replication `rep`. Numeric failures propagate.
struct EstimateRun {
  std::uint64_t seed = 0;
  std::vector<double> beta_star;
  EstimateReport report;
};
EstimateRun estimate(const RunConfig& cfg, int rep = 0);
nlohmann::ordered_json estimate_to_json(const RunConfig& cfg, const EstimateRun& run);

/// The iteration trace of the single replication of `cfg` (reps must be 1).
std::vector<TraceRow> trace(const RunConfig& cfg);
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows);

struct SolveOptions {
  int nodes = 200;  // Gauss nodes per axis
  int steps = 5000;
  double lr = 1e-3;
  int width = 5;
  int depth = 3;
  std::uint64_t seed = 0;
};

struct SolveResult {
  std::string problem;
  std::string solver;
  double loss_K = 0.0;
  double sup_error = 0.0;  // against the exact solution on 1001 equispaced points
  std::optional<int> steps;
};

/// Solves an analytic problem ("analytic:<id>" or "<id>") with "poly:<d>", "neural" or "neural:<w>x<d>".
SolveResult solve_analytic(const std::string& problem, const std::string& solver, const SolveOptions& opt = {});
nlohmann::ordered_json solve_to_json(const SolveResult& r);

}  // namespace fredse
