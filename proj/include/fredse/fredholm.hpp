#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "fredse/data.hpp"
#include "fredse/nn.hpp"
#include "fredse/quadrature.hpp"
#include "fredse/rng.hpp"
#include "fredse/solution.hpp"

namespace fredse {

using Point = std::span<const double>;
using Params = std::span<const double>;
/// Per-(observation, parameter) auxiliary values, e.g. normalising integrals.
using Aux = std::span<const double>;

enum class ResidualKind { SecondKind, Tikhonov };

/*
 * Which equation the residual measures:
 *   SecondKind:    int K b ds = C + w b      residual = I - C - w b
 *   Tikhonov(lam): int K b ds = C - lam w b  residual = I - C + lam w b
 * Both are I - C - alpha w b with alpha = 1 or -lam.
 */
struct ResidualMode {
  ResidualKind kind = ResidualKind::SecondKind;
  double lambda = 0.0;

  static ResidualMode second_kind() { return {}; }
  static ResidualMode tikhonov(double lambda);
  double alpha() const noexcept { return kind == ResidualKind::SecondKind ? 1.0 : -lambda; }
};

/// Combine the three residual pieces according to `mode`.
double combine_residual(const ResidualMode& mode, double integral, double forcing, double weighted_b);
/// Unified form I - C - alpha * w b.
inline double combine_residual_unified(double alpha, double integral, double forcing, double weighted_b) {
  return integral - forcing - alpha * weighted_b;
}

/*
 * How observations enter the inner loss.
 *   PerObservation: one equation per observation, b takes (point, covariates).
 *   Averaged:       the equation is averaged over observations before
 *                   squaring and b takes the point only.
 */
enum class Pooling { PerObservation, Averaged };

/// K(s,t,O) = sum_r left_r(s,O) right_r(t,O).
struct SeparableKernel {
  using FactorFn = std::function<void(Point point, Obs o, Params beta, Aux aux, std::span<double> out)>;
  int rank = 0;
  FactorFn left;
  FactorFn right;
};

/*
 * Optional vectorised forms of the separable factors, forcing and weight.
 * `points` holds one point per column; each function returns one column of
 * values per point (R x P for the factors, q x P for the forcing, 1 x P for
 * the weight). Used by Discretization when present; the pointwise forms stay
 * the reference.
 */
struct BatchEval {
  using MatrixFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& points, Obs o, Params beta, Aux aux)>;
  MatrixFn left;
  MatrixFn right;
  MatrixFn forcing;
  MatrixFn weight;
};

/*
 * One instance of the parameterised integral equation
 *   int K(s,t,O;beta) b(s,O) ds = C(t,O;beta) + alpha w(t,O;beta) b(t,O),
 * with the kernel given densely, as a low-rank factorisation, or both.
 */
struct FredholmProblem {
  using KernelFn = std::function<double(Point s, Point t, Obs o, Params beta, Aux aux)>;
  using ForcingFn = std::function<void(Point t, Obs o, Params beta, Aux aux, std::span<double> out)>;
  using WeightFn = std::function<double(Point t, Obs o, Params beta, Aux aux)>;
  using AuxFn = std::function<std::vector<double>(Obs o, Params beta, const QuadratureGrid& grid)>;

  FredholmProblem(std::string name, int q, ResidualMode mode, Domain s_domain, Domain t_domain);

  std::string name;
  int q;
  ResidualMode mode;
  Domain s_domain;
  Domain t_domain;

  KernelFn kernel;                           // optional when `separable` is set
  std::optional<SeparableKernel> separable;  // preferred by the discretisation
  ForcingFn forcing;
  WeightFn weight;  // multiplier on the b(t,O) term; 1 when empty
  AuxFn aux;        // empty when no auxiliary values are needed
  std::optional<BatchEval> batch;  // vectorised forms for separable problems

  std::vector<std::size_t> b_covariates;  // observation fields appended to b's input
  Pooling pooling = Pooling::PerObservation;
  bool observation_dependent = true;  // false: K, C, w ignore O
  bool beta_dependent = true;

  int point_dim() const noexcept { return t_domain.dimension(); }
  int b_input_dim() const noexcept { return point_dim() + static_cast<int>(b_covariates.size()); }

  /// Throws ConfigError when the problem is not usable.
  void validate() const;

  double eval_kernel(Point s, Point t, Obs o, Params beta, Aux aux) const;
  double eval_weight(Point t, Obs o, Params beta, Aux aux) const;
  std::vector<double> eval_aux(Obs o, Params beta, const QuadratureGrid& grid) const;
};

/// Input column for b at `point` for observation `o`.
Eigen::VectorXd b_input(const FredholmProblem& p, Point point, Obs o);

/// Residual of the equation at one (t, O), with the inner integral over the grid's inner nodes.
Eigen::VectorXd residual(const FredholmProblem& p, const SolutionFn& b, Point t, Obs o, Params beta,
                         const QuadratureGrid& grid);
/// Same with the combination done in unified alpha form; must agree bit for bit with residual().
Eigen::VectorXd residual_unified(const FredholmProblem& p, const SolutionFn& b, Point t, Obs o, Params beta,
                                 const QuadratureGrid& grid);
/// Observation-averaged residual used by Pooling::Averaged problems.
Eigen::VectorXd pooled_residual(const FredholmProblem& p, const SolutionFn& b, Point t, const Dataset& data,
                                Params beta, const QuadratureGrid& grid);

/// b evaluated at every node the loss needs.
struct GridValues {
  Eigen::MatrixXd inner;  // q x (groups * J2)
  Eigen::MatrixXd outer;  // q x (groups * J1)
};

/*
 * The inner loss for fixed (data, beta, grid), precomputed so repeated
 * evaluations cost only matrix products. A "group" is one observation in
 * PerObservation mode; Averaged and observation-free problems have a single
 * group.
 */
class Discretization {
 public:
  Discretization(const FredholmProblem& p, const Dataset& data, Params beta, const QuadratureGrid& grid);

  int q() const noexcept { return q_; }
  int input_dim() const noexcept { return input_dim_; }
  std::size_t groups() const noexcept { return groups_.size(); }
  Eigen::Index j1() const noexcept { return j1_; }
  Eigen::Index j2() const noexcept { return j2_; }

  /// b inputs for the inner (input_dim x J2) and outer (input_dim x J1) nodes of group g.
  Eigen::MatrixXd inner_inputs(std::size_t g) const;
  Eigen::MatrixXd outer_inputs(std::size_t g) const;
  /// Inputs of all groups, concatenated group by group.
  Eigen::MatrixXd all_inner_inputs() const;
  Eigen::MatrixXd all_outer_inputs() const;

  GridValues evaluate(const SolutionFn& b) const;

  /// Linear part I - alpha w b for m stacked functions: b_inner m x J2, b_outer m x J1 -> m x J1.
  Eigen::MatrixXd apply_operator(std::size_t g, const Eigen::MatrixXd& b_inner, const Eigen::MatrixXd& b_outer) const;
  const Eigen::MatrixXd& forcing(std::size_t g) const { return groups_[g].forcing; }
  /// q x J1 residual matrix of group g.
  Eigen::MatrixXd residuals(std::size_t g, const Eigen::MatrixXd& b_inner, const Eigen::MatrixXd& b_outer) const;
  /// Pull a residual sensitivity dr (q x J1) back to the node values.
  void pullback(std::size_t g, const Eigen::MatrixXd& dr, Eigen::MatrixXd& d_inner, Eigen::MatrixXd& d_outer) const;

  /// (1/G) sum_g (1/J1) sum_l ||r_gl||^2.
  double loss(const GridValues& v) const;
  double loss(const SolutionFn& b) const { return loss(evaluate(b)); }

 private:
  struct Group {
    Eigen::MatrixXd kernel;   // J1 x J2, inner weight folded in (dense kernels)
    Eigen::MatrixXd left;     // R x J2, inner weight folded in (separable kernels)
    Eigen::MatrixXd right;    // J1 x R
    Eigen::MatrixXd forcing;  // q x J1
    Eigen::RowVectorXd alpha_w;  // 1 x J1
    Eigen::VectorXd covariates;
  };

  int q_;
  int input_dim_;
  int point_dim_;
  Eigen::Index j1_;
  Eigen::Index j2_;
  bool separable_;
  const QuadratureGrid* grid_;
  std::vector<Group> groups_;
};

double loss_K(const FredholmProblem& p, const SolutionFn& b, const Dataset& data, Params beta,
              const QuadratureGrid& grid);
/// Node-by-node evaluation through residual(); independent of Discretization.
double loss_K_reference(const FredholmProblem& p, const SolutionFn& b, const Dataset& data, Params beta,
                        const QuadratureGrid& grid);

/*
 * Polynomial collocation baseline. For fixed beta the residual is linear in
 * the coefficients; the least-squares system (one row per group, node and
 * component) is reduced block by block with Householder QR and finished
 * with a complete orthogonal decomposition, which yields the minimum-norm
 * solution when the design is rank deficient.
 */
struct PolynomialFit {
  PolynomialCoefficients coefficients;
  double loss = 0.0;
  Eigen::Index rank = 0;
};

PolynomialBasis default_polynomial_basis(const FredholmProblem& p, int degree);
PolynomialFit solve_polynomial(const Discretization& d, const PolynomialBasis& basis);
PolynomialCoefficients solve_polynomial(const FredholmProblem& p, const Dataset& data, Params beta,
                                        const QuadratureGrid& grid, int degree);

/*
 * Adam training of a network b on the inner loss with beta and the grid held
 * fixed. batch = 0 trains on the full loss; otherwise each step uses `batch`
 * groups (PerObservation) or `batch` outer nodes (single-group problems).
 */
class NeuralInnerSolver {
 public:
  NeuralInnerSolver(NetworkWeights w, AdamState st, std::uint64_t batch_seed);

  const NetworkWeights& weights() const noexcept { return w_; }
  const AdamState& adam() const noexcept { return st_; }
  NeuralSolution solution() const { return NeuralSolution(w_); }

  /// `steps` Adam updates; returns the loss of the last (mini)batch before its update.
  double train(const Discretization& d, int steps, double lr, int batch);

 private:
  double step(const Discretization& d, double lr, int batch);

  NetworkWeights w_;
  AdamState st_;
  Rng rng_;
};

struct NeuralStepResult {
  NetworkWeights weights;
  AdamState adam;
  double loss;  // full-batch loss after the final step
};

NeuralStepResult solve_neural_steps(const FredholmProblem& p, const Dataset& data, Params beta,
                                    const QuadratureGrid& grid, NetworkWeights w, AdamState st, int steps, double lr,
                                    int batch, std::uint64_t batch_seed = 0);

/// Default batch rule: full batch up to 1000 observations, else 256.
int default_batch(std::size_t n_observations);

}  // namespace fredse
