#pragma once

#include <array>
#include <functional>

#include "fredse/examples/bundle.hpp"

namespace fredse {

/*
 * Linear outcome model with outcomes missing not at random:
 *   X ~ N(0.5, 0.25), Y = b1 + b2 X + e with e ~ N(0, noise_sd^2),
 *   A ~ Bern(expit(1 + Y)), Y observed only when A = 1.
 * Draw order per row: X, e, then the uniform for A.
 */
struct MnarOptions {
  std::array<double, 2> beta_star{0.25, -0.5};
  double noise_sd = 1.0;
};

/// Observed columns x, a, y (y is NaN when a = 0); truth column y_full.
SimulatedData gen_mnar(std::size_t n, std::uint64_t seed, const MnarOptions& opt = {});

/// Working missingness model P(A = 1 | y) used by the default bundle.
double mnar_default_eta(double y);

/*
 * The pooled second-kind equation for b(t):
 *   mean_i [ int K_i(s,t) b(s) ds + p_i(t) b(t) ] = mean_i C_i(t),
 * with p_i the N(b1 + b2 x_i, 1) density, eta the working model,
 *   D_i = int p_i (1 - eta),  K_i(s,t) = p_i(s) eta(s) p_i(t) / D_i,
 *   C_i(t) = dp_i(t)/dbeta + [int dp_i/dbeta eta / D_i] p_i(t),
 * and the estimating function
 *   psi_i = A (S_i(Y) - b(Y)) + (1 - A) [int p_i b eta - int dp_i/dbeta eta] / D_i,
 * S_i the score of p_i. All y-integrals use the inner grid on [-5, 5].
 */
ExampleBundle mnar_bundle(std::function<double(double)> working_eta = mnar_default_eta);

/// The per-observation pieces above at one x, for checks against independent quadrature.
struct MnarTerms {
  double denominator;            // D
  std::array<double, 2> numer;   // int dp/dbeta eta
};
MnarTerms mnar_terms(double x, std::array<double, 2> beta, const Eigen::MatrixXd& nodes, double volume,
                     const std::function<double(double)>& eta);

/// OLS of y_full on (1, x).
std::vector<double> mnar_oracle(const SimulatedData& data);
/// OLS of y on (1, x) over complete cases.
std::vector<double> mnar_biased(const SimulatedData& data);

}  // namespace fredse
