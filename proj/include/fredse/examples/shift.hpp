#pragma once

#include "fredse/examples/bundle.hpp"

namespace fredse {

/*
 * Source/target data with posterior drift between the two outcome models:
 *   X ~ U(1,3), A ~ Bern(expit(x)), Y ~ Bern(expit(x + A)).
 * Draw order per row: X, the uniform for A, the uniform for Y.
 * A = 0 marks the target population.
 */
SimulatedData gen_shift(std::size_t n, std::uint64_t seed);

/// Nuisance quantities of the shift example, all at the true model.
struct ShiftNuisance {
  double target_prob;   // P(Y=1 | x, A=0) = expit(x)
  double source_prob;   // P(Y=1 | x, A=1) = expit(x + 1)
  double prob_source;   // P(A=1 | x) = expit(x)
  double prediction;    // f(x) = expit(sqrt(x))
  double var_target;    // var(Y | x, A=0) P(A=0 | x)
  double var_source;    // var(Y | x, A=1) P(A=1 | x)
  double mu;            // var_target + var_source
  double risk;          // E[(Y - f(X))^2 | x, A=0]
  double forcing;       // right-hand side of the pointwise equation for zeta
};
ShiftNuisance shift_nuisance(double x);

/// P(A = 0), in closed form.
double shift_target_share();

/// Forcing term in its general form, with the conditional expectation over
/// the level set of the target logit taken as pointwise evaluation.
double shift_forcing_general(double x);

/// Exact solution of the pointwise equation zeta (1 - var_source / mu) = forcing.
double zeta_star(double x);

/// Estimate of the target risk from the data and a solution zeta.
double shift_beta_hat(const Dataset& data, const std::function<double(double)>& zeta);

/// Target risk by composite Simpson quadrature on `intervals` panels (even).
double beta_star_shift(int intervals = 20000);

/*
 * Bundle for zeta on x in [1,3]: a rank-0 kernel, forcing -kappa and weight
 * var_target/mu, so the residual is kappa - (var_target/mu) zeta. psi is
 * the plug-in influence function minus beta; the equation does not involve
 * beta, so the decoupled path applies.
 */
ExampleBundle shift_bundle();

}  // namespace fredse
