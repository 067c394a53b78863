#pragma once

#include <functional>

#include "fredse/examples/bundle.hpp"

namespace fredse {

/*
 * Binary treatment and outcome with a hidden confounder:
 *   X_j ~ U(0,1) iid (j = 1..p), U = X_1 - X_2^2 + N(0, 0.1),
 *   A ~ Bern(expit(3 S(X) + 2U)), Y ~ Bern(expit(4 S(X) + beta A + 2U)),
 *   S(x) = x_1 - x_2 + x_3 - ...
 * Draw order per row: X_1..X_p, the normal for U, the uniform for A, the
 * uniform for Y.
 */
SimulatedData gen_sens(std::size_t n, std::uint64_t seed, int p = 10, double beta_star = 2.0);

/// Working density of U given x.
using WorkingDensity = std::function<double(double u, std::span<const double> x)>;
double sens_default_eta(double u, std::span<const double> x);

/// Alternating sum S(x).
double alternating_sum(std::span<const double> x);

/// p(y, a | x, u; beta) under the working outcome and treatment models.
double sens_joint(int y, int a, double s, double u, double beta);
/// d/dbeta log of the working joint law: a (y - expit(4s + beta a + 2u)).
double sens_working_score(int y, int a, double s, double u, double beta);

/*
 * Tikhonov-regularised equation on u in [-0.5, 0.5] for b(u, x):
 *   int K(u', u, x) b(u', x) du' = C(u, x) - lambda b(u, x),
 * where with p_r(u) = p(y, a | x, u) for the four cells r = (y, a),
 *   g_r = int p_r eta,  K(u', u) = sum_r p_r(u') eta(u') p_r(u) / g_r,
 *   C(u) = sum_r [int s_r p_r eta / g_r] p_r(u),
 * and psi_i = int (s_{r_i} - b(., X_i)) p_{r_i} eta / g_{r_i}.
 * Cell integrals over (y, a) are exact four-term sums; u-integrals use the
 * inner grid.
 */
ExampleBundle sens_bundle(double lambda = 0.001, int p = 10, WorkingDensity eta = sens_default_eta);

/*
 * Exact solution of the discretised equation for one observation. It lies
 * in the span of the four p_r: b(u) = sum_r alpha_r p_r(u) with
 * (lambda I + M) alpha = c, M_rq = int p_r eta p_q / g_r on the inner grid.
 */
struct SensExact {
  Eigen::Vector4d alpha;
  double s;
  double beta;
  double operator()(double u) const;
};
SensExact sens_exact_solution(std::span<const double> x, double beta, double lambda, const QuadratureGrid& grid,
                              const WorkingDensity& eta = sens_default_eta);

}  // namespace fredse
