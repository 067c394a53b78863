#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fredse/data.hpp"
#include "fredse/error.hpp"
#include "fredse/fredholm.hpp"
#include "fredse/nn.hpp"
#include "fredse/quadrature.hpp"
#include "fredse/solution.hpp"

namespace fredse {

/// Which node values of b an estimating function reads besides its probe points.
enum class InnerValues {
  None,            // no integrals of b
  Shared,          // b(s_j) at the inner nodes, q x J2
  PerObservation,  // b(s_j, covariates of O_i), q x (N * J2), observation-major
};

/// Values of b handed to psi.
struct PsiInputs {
  const Eigen::MatrixXd& probe;  // at probe_points(data, grid)
  const Eigen::MatrixXd& inner;  // layout given by EstimatingEquation::inner
};

/*
 * Estimating function psi(O, beta, b) for a whole dataset.
 *
 * b enters only through its values at fixed inputs that depend on the data
 * and grid but not on beta: optional probe points plus, for integrals, the
 * inner quadrature nodes. The optimiser evaluates b there once per
 * iteration and then calls `psi` as often as the outer gradient needs.
 */
struct EstimatingEquation {
  using ProbeFn = std::function<Eigen::MatrixXd(const Dataset& data, const QuadratureGrid& grid)>;
  /// Returns q x N, column i = psi(O_i, beta, b).
  using PsiFn = std::function<Eigen::MatrixXd(const Dataset& data, const QuadratureGrid& grid, Params beta,
                                              const PsiInputs& b)>;

  std::string name;
  int q = 1;
  ProbeFn probe_points;  // may be empty
  InnerValues inner = InnerValues::None;
  std::vector<std::size_t> inner_covariates;  // appended to s_j for PerObservation
  PsiFn psi;
};

/// Inputs at which psi reads b on the inner nodes (empty matrix for InnerValues::None).
Eigen::MatrixXd psi_inner_inputs(const EstimatingEquation& eq, const Dataset& data, const QuadratureGrid& grid);

/// psi values of every observation with the values of b held fixed.
class PsiEvaluator {
 public:
  /// Evaluates b (may be null when psi reads no values of b).
  PsiEvaluator(const EstimatingEquation& eq, const Dataset& data, const QuadratureGrid& grid, const SolutionFn* b);
  /// Uses values computed elsewhere.
  PsiEvaluator(const EstimatingEquation& eq, const Dataset& data, const QuadratureGrid& grid,
               Eigen::MatrixXd probe, Eigen::MatrixXd inner);

  /// q x N per-observation values; throws NumericError naming the first non-finite observation.
  Eigen::MatrixXd values(Params beta) const;
  /// (1/N) sum_i psi(O_i).
  Eigen::VectorXd mean(Params beta) const;
  /// ||mean(beta)||^2.
  double loss(Params beta) const;
  /// Central differences of loss() with step h in every coordinate.
  Eigen::VectorXd gradient(Params beta, double h) const;

 private:
  const EstimatingEquation* eq_;
  const Dataset* data_;
  const QuadratureGrid* grid_;
  Eigen::MatrixXd probe_;
  Eigen::MatrixXd inner_;
};

/// ||(1/N) sum_i psi(O_i, beta, b)||^2.
double loss_psi(const EstimatingEquation& eq, Params beta, const SolutionFn* b, const Dataset& data,
                const QuadratureGrid& grid);
/// Central finite-difference gradient of loss_psi in beta.
Eigen::VectorXd grad_beta(const EstimatingEquation& eq, Params beta, const SolutionFn* b, const Dataset& data,
                          const QuadratureGrid& grid, double fd_step);

enum class GridKind { MonteCarlo, Gauss };

/*
 * Direction of the Adam step on beta, with b frozen.
 *   Gradient: the finite-difference gradient of L_psi.
 *   Score:    -mean psi, i.e. a stochastic-approximation step towards a root
 *             of the estimating equation. Its rest points are exactly the
 *             roots; it needs psi oriented so that d(mean psi)/d(beta) is
 *             negative definite, as for a score.
 */
enum class OuterUpdate { Gradient, Score };

struct BiLevelConfig {
  int gamma = 10;
  int max_iter = 2000;
  double tol = 1e-5;                  // stopping tolerance on ||beta_m - beta_{m-1}||
  std::optional<double> tol_omega;    // on the b update; defaults to tol
  int j1 = 1000;
  int j2 = 1000;
  double lr_beta = 1e-2;
  double lr_omega = 1e-4;
  double fd_step = 1e-5;
  int batch = -1;  // -1: default_batch(N); 0: full batch
  std::uint64_t seed = 0;
  std::vector<double> beta_init;
  double divergence_threshold = 1e12;
  GridKind grid = GridKind::MonteCarlo;
  OuterUpdate outer = OuterUpdate::Gradient;
  bool allow_decoupled = true;  // take the shortcut when the equation ignores beta

  double omega_tolerance() const { return tol_omega.value_or(tol); }
  /// Throws ConfigError naming the offending field.
  void validate(int q) const;
};

/// One row per iteration m: the iterate entering the iteration and its losses.
struct TraceRow {
  std::vector<double> beta;
  double loss_psi;
  double loss_K;
};

struct EstimateReport {
  std::vector<double> beta_hat;
  bool converged = false;
  int iterations = 0;
  double final_loss_psi = 0.0;
  double final_loss_K = 0.0;
  double beta_step = 0.0;   // ||beta_m - beta_{m-1}|| at the last iteration
  double omega_step = 0.0;  // ||omega_m - omega_{m-1}|| at the last iteration
  std::vector<TraceRow> trace;
  double wall_ms = 0.0;
  std::optional<NetworkWeights> weights;
  std::optional<PolynomialCoefficients> coefficients;

  std::unique_ptr<SolutionFn> solution() const;
};

/// Raised when a loss exceeds the divergence threshold or turns non-finite.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::vector<TraceRow> trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const noexcept { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

/// Where in an iteration a StepProbe callback fires.
enum class Phase { BeforeBeta, AfterBeta, BeforeOmega, AfterOmega };

struct StepProbe {
  Phase phase;
  int iteration;
  const std::vector<double>* beta;
  const Eigen::VectorXd* omega;
};

struct RunHooks {
  std::function<void(const StepProbe&)> on_step;
};

/// Fixed sub-seeds of one estimation run.
struct RunSeeds {
  std::uint64_t grid;
  std::uint64_t weights;
  std::uint64_t batches;
};
RunSeeds run_seeds(std::uint64_t seed);

/// Quadrature grid for a problem under a config (t/s domains from the problem).
QuadratureGrid make_grid(const FredholmProblem& p, const BiLevelConfig& cfg);

/*
 * Alternating optimiser: each iteration takes one Adam step on L_psi in beta
 * with b frozen, then gamma Adam steps on L_K in the network weights with
 * beta frozen. Stops when both updates are below their tolerances or after
 * max_iter iterations. Problems whose equation does not involve beta take
 * the decoupled path: b is trained first, then beta is solved with b fixed.
 */
EstimateReport solve_bilevel(const FredholmProblem& p, const EstimatingEquation& eq, const Dataset& data,
                             const NetworkArch& arch, const BiLevelConfig& cfg, const RunHooks& hooks = {});

/// The same loop with the inner step replaced by the exact polynomial least-squares fit.
EstimateReport solve_bilevel_polynomial(const FredholmProblem& p, const EstimatingEquation& eq,
                                        const Dataset& data, int degree, const BiLevelConfig& cfg, const RunHooks& hooks = {});

}  // namespace fredse
