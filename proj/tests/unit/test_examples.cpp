#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fredse/error.hpp"
#include "fredse/examples/bundle.hpp"
#include "fredse/examples/mnar.hpp"
#include "fredse/examples/registry.hpp"
#include "fredse/examples/sensitivity.hpp"
#include "fredse/examples/shift.hpp"
#include "fredse/rng.hpp"

using namespace fredse;

namespace {

// Composite trapezoid of f on [lo, hi].
template <class F>
double trapezoid(F f, double lo, double hi, int intervals) {
  const double h = (hi - lo) / intervals;
  double s = 0.5 * (f(lo) + f(hi));
  for (int k = 1; k < intervals; ++k) s += f(lo + k * h);
  return s * h;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Moment {
  double mean;
  double se;
};

Moment moment(const std::vector<double>& v) {
  double s = 0, ss = 0;
  for (double x : v) s += x;
  const double m = s / v.size();
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (v.size() - 1) / v.size())};
}

std::shared_ptr<SolutionFn> zero_solution(int in, int out) {
  return std::make_shared<FunctionSolution>(in, out, [](std::span<const double>, std::span<double> o) {
    for (double& v : o) v = 0.0;
  });
}

}  // namespace

// ---------------------------------------------------------------- MNAR

TEST_CASE("gen_mnar: missing rate, covariate mean, determinism, hidden outcome") {
  const SimulatedData d = gen_mnar(100000, 1);
  // P(A = 0) = 1 - E expit(1 + Y) with Y ~ N(0, 1 + 0.5^2 * 0.5^2), about 0.305.
  const double sd = std::sqrt(1.0625);
  const double oracle = 1.0 - trapezoid([&](double y) { return logistic(1 + y) * normal_pdf(y / sd) / sd; }, -12, 12, 20000);
  double missing = 0, xs = 0;
  const std::size_t a = d.observed.column_index("a"), y = d.observed.column_index("y"), x = d.observed.column_index("x");
  for (std::size_t i = 0; i < d.observed.size(); ++i) {
    missing += d.observed.at(i, a) == 0.0;
    xs += d.observed.at(i, x);
    if (d.observed.at(i, a) == 1.0) {
      CHECK(d.observed.at(i, y) == d.truth.at(i, 0));
    } else {
      CHECK(std::isnan(d.observed.at(i, y)));
    }
  }
  CHECK(std::abs(missing / 1e5 - oracle) < 0.01);
  CHECK(std::abs(xs / 1e5 - 0.5) < 0.01);
  CHECK_FALSE(d.observed.has_column("y_full"));

  const SimulatedData e = gen_mnar(50, 9), f = gen_mnar(50, 9);
  for (std::size_t i = 0; i < 50; ++i) CHECK(e.truth.at(i, 0) == f.truth.at(i, 0));
}

TEST_CASE("mnar kernel is positive and the forcing matches an independent quadrature") {
  const ExampleBundle b = mnar_bundle();
  const QuadratureGrid grid = gauss_grid(b.problem.t_domain, b.problem.s_domain, 2, 20000);
  const double row[3] = {0.5, 0.0, std::nan("")};
  const Obs o(row, 3);
  const std::vector<double> beta{0.25, -0.5};
  const std::vector<double> aux = b.problem.eval_aux(o, beta, grid);

  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const double s = rng.uniform(-5, 5), t = rng.uniform(-5, 5);
    CHECK(b.problem.eval_kernel(std::span<const double>(&s, 1), std::span<const double>(&t, 1), o, beta, aux) < 0.0);
  }

  const double mu = 0.25 - 0.5 * 0.5;
  auto p = [&](double y) { return normal_pdf(y - mu); };
  auto eta = [](double y) { return logistic(1 - y); };
  const double denom = trapezoid([&](double s) { return p(s) * (1 - eta(s)); }, -5, 5, 100000);
  const double n1 = trapezoid([&](double s) { return (s - mu) * p(s) * eta(s); }, -5, 5, 100000);
  const double n2 = 0.5 * n1;
  const double t = 0.0;
  const double c1 = (t - mu) * p(t) + n1 / denom * p(t);
  const double c2 = 0.5 * (t - mu) * p(t) + n2 / denom * p(t);
  double out[2];
  b.problem.forcing(std::span<const double>(&t, 1), o, beta, aux, out);
  // The bundle stores K and C negated (see mnar_bundle).
  CHECK(std::abs(-out[0] - c1) < 1e-4);
  CHECK(std::abs(-out[1] - c2) < 1e-4);

  const MnarTerms terms = mnar_terms(0.5, {0.25, -0.5}, grid.inner_points, 10.0, mnar_default_eta);
  CHECK(std::abs(terms.denominator - denom) < 1e-6);
  CHECK(std::abs(terms.numer[0] - n1) < 1e-6);
  CHECK(std::abs(terms.numer[1] - n2) < 1e-6);
}

TEST_CASE("mnar: complete-data score has mean zero at the truth") {
  const ExampleBundle b = mnar_bundle();
  SimulatedData sim = gen_mnar(100000, 3);
  Dataset full({"x", "a", "y"});
  for (std::size_t i = 0; i < sim.observed.size(); ++i) {
    const double row[3] = {sim.observed.at(i, 0), 1.0, sim.truth.at(i, 0)};
    full.add_row(row);
  }
  const QuadratureGrid grid = sample_grid(b.problem.t_domain, b.problem.s_domain, 10, 10, 0);
  const auto zero = zero_solution(1, 2);
  const PsiEvaluator psi(b.psi, full, grid, zero.get());
  const Eigen::VectorXd m = psi.mean(b.beta_star);
  CHECK(std::abs(m[0]) <= 0.02);
  CHECK(std::abs(m[1]) <= 0.02);
}

TEST_CASE("mnar comparators") {
  MnarOptions quiet;
  quiet.noise_sd = 0.0;
  const SimulatedData exact = gen_mnar(200, 4, quiet);
  const std::vector<double> o = mnar_oracle(exact);
  CHECK(std::abs(o[0] - 0.25) < 1e-10);
  CHECK(std::abs(o[1] + 0.5) < 1e-10);

  const SimulatedData big = gen_mnar(100000, 5);
  const std::vector<double> ob = mnar_oracle(big);
  CHECK(std::abs(ob[0] - 0.25) < 0.02);
  CHECK(std::abs(ob[1] + 0.5) < 0.02);
  CHECK(std::abs(mnar_biased(big)[0] - 0.25) > 0.1);

  SimulatedData flat = gen_mnar(20, 6);
  Dataset same_x({"x", "a", "y"});
  for (std::size_t i = 0; i < 20; ++i) {
    const double row[3] = {1.0, 1.0, flat.truth.at(i, 0)};
    same_x.add_row(row);
  }
  flat.observed = same_x;
  CHECK_THROWS_AS(mnar_oracle(flat), NumericError);
}

// ---------------------------------------------------------------- sensitivity

TEST_CASE("gen_sens: covariates in (0,1) and treatment rate matches an independent sampler") {
  const SimulatedData d = gen_sens(100000, 7);
  double treated = 0;
  for (std::size_t i = 0; i < d.observed.size(); ++i) {
    for (std::size_t j = 0; j < 10; ++j) {
      const double x = d.observed.at(i, j);
      CHECK((x > 0.0 && x < 1.0));
    }
    treated += d.observed.at(i, 10);
  }
  CHECK_FALSE(d.observed.has_column("u"));

  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(0.1));
  double oracle = 0;
  const int draws = 1000000;
  for (int k = 0; k < draws; ++k) {
    double x[10];
    for (double& v : x) v = unif(gen);
    const double u = x[0] - x[1] * x[1] + noise(gen);
    double s = 0;
    for (int j = 0; j < 10; ++j) s += (j % 2 == 0 ? 1 : -1) * x[j];
    oracle += logistic(3 * s + 2 * u);
  }
  CHECK(std::abs(treated / 1e5 - oracle / draws) < 0.01);

  const SimulatedData e = gen_sens(30, 8), f = gen_sens(30, 8);
  for (std::size_t i = 0; i < 30; ++i) CHECK(e.observed.at(i, 11) == f.observed.at(i, 11));
}

TEST_CASE("sensitivity working score is the beta-derivative of the working log-likelihood") {
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const int y = static_cast<int>(rng.below(2)), a = static_cast<int>(rng.below(2));
    const double s = rng.uniform(-2, 2), u = rng.uniform(-0.5, 0.5), beta = rng.uniform(0, 4);
    const double h = 1e-6;
    // log-likelihood written with log1p so that 1 - expit(z) keeps its digits for large z
    const auto loglik = [&](double bb) {
      const double zy = 4.0 * s + bb * a + 2.0 * u, za = 3.0 * s + 2.0 * u;
      return -std::log1p(std::exp(y == 1 ? -zy : zy)) - std::log1p(std::exp(a == 1 ? -za : za));
    };
    CHECK(sens_joint(y, a, s, u, beta) == doctest::Approx(std::exp(loglik(beta))).epsilon(1e-9));
    const double fd = (loglik(beta + h) - loglik(beta - h)) / (2 * h);
    const double an = sens_working_score(y, a, s, u, beta);
    CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(an)) + 1e-9);
  }
  double total = 0;
  for (int y = 0; y < 2; ++y)
    for (int a = 0; a < 2; ++a) total += sens_joint(y, a, 0.3, 0.1, 2.0);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("sensitivity cell sums equal brute-force enumeration") {
  const ExampleBundle b = sens_bundle(0.001, 4);
  const QuadratureGrid grid = sample_grid(b.problem.t_domain, b.problem.s_domain, 8, 64, 3);
  const double row[6] = {0.2, 0.7, 0.4, 0.9, 1, 0};
  const Obs o(row, 6);
  const double s = alternating_sum(std::span<const double>(row, 4));
  const std::vector<double> beta{1.7};
  const std::vector<double> aux = b.problem.eval_aux(o, beta, grid);
  const double w = grid.inner_weight();

  double g[2][2] = {}, c[2][2] = {};
  for (Eigen::Index j = 0; j < grid.j2(); ++j) {
    const double u = grid.inner_points(0, j);
    for (int y = 0; y < 2; ++y)
      for (int a = 0; a < 2; ++a) {
        g[y][a] += w * sens_joint(y, a, s, u, 1.7);
        c[y][a] += w * sens_working_score(y, a, s, u, 1.7) * sens_joint(y, a, s, u, 1.7);
      }
  }
  for (int y = 0; y < 2; ++y)
    for (int a = 0; a < 2; ++a) {
      const std::size_t r = static_cast<std::size_t>(y + 2 * a);
      CHECK(aux[r] == doctest::Approx(g[y][a]).epsilon(1e-12));
      CHECK(aux[r + 4] == doctest::Approx(c[y][a] / g[y][a]).epsilon(1e-12));
    }

  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const double u1 = rng.uniform(-0.5, 0.5), u2 = rng.uniform(-0.5, 0.5);
    double brute = 0;
    for (int y = 0; y < 2; ++y)
      for (int a = 0; a < 2; ++a) brute += sens_joint(y, a, s, u1, 1.7) * sens_joint(y, a, s, u2, 1.7) / g[y][a];
    const double k_val = b.problem.eval_kernel(std::span<const double>(&u1, 1), std::span<const double>(&u2, 1), o, beta, aux);
    CHECK(k_val >= 0.0);
    CHECK(k_val == doctest::Approx(brute).epsilon(1e-12));

    double cb = 0;
    for (int y = 0; y < 2; ++y)
      for (int a = 0; a < 2; ++a) cb += c[y][a] / g[y][a] * sens_joint(y, a, s, u2, 1.7);
    double out = 0;
    b.problem.forcing(std::span<const double>(&u2, 1), o, beta, aux, std::span<double>(&out, 1));
    CHECK(out == doctest::Approx(cb).epsilon(1e-12));
  }
}

TEST_CASE("sensitivity: four-term sums agree with Monte Carlo over (y, a)") {
  const double s = 0.4, u = -0.2, beta = 2.0;
  double exact = 0;
  for (int y = 0; y < 2; ++y)
    for (int a = 0; a < 2; ++a) exact += sens_working_score(y, a, s, u, beta) * sens_joint(y, a, s, u, beta) * (1 + y + a);
  Rng rng(10);
  std::vector<double> draws;
  const int n = 1000000;
  draws.reserve(n);
  for (int k = 0; k < n; ++k) {
    const int a = rng.bernoulli(logistic(3 * s + 2 * u)) ? 1 : 0;
    const int y = rng.bernoulli(logistic(4 * s + beta * a + 2 * u)) ? 1 : 0;
    draws.push_back(sens_working_score(y, a, s, u, beta) * (1 + y + a));
  }
  const Moment m = moment(draws);
  CHECK(std::abs(m.mean - exact) <= 3 * m.se);
}

TEST_CASE("sensitivity: working score has mean zero under the working law") {
  Rng rng(11);
  std::vector<double> scores;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    double x[10];
    for (double& v : x) v = rng.uniform();
    const double s = alternating_sum(x);
    const double u = rng.uniform(-0.5, 0.5);
    const int a = rng.bernoulli(logistic(3 * s + 2 * u)) ? 1 : 0;
    const int y = rng.bernoulli(logistic(4 * s + 2.0 * a + 2 * u)) ? 1 : 0;
    scores.push_back(sens_working_score(y, a, s, u, 2.0));
  }
  const Moment m = moment(scores);
  CHECK(std::abs(m.mean) <= 3 * m.se);
}

TEST_CASE("sensitivity exact discrete solution zeroes the inner loss") {
  const ExampleBundle b = sens_bundle(0.001, 3);
  const QuadratureGrid grid = sample_grid(b.problem.t_domain, b.problem.s_domain, 30, 30, 6);
  const SimulatedData sim = gen_sens(1, 2, 3);
  const std::vector<double> beta{2.0};
  const Obs o = sim.observed.row(0);
  const SensExact ex = sens_exact_solution(o.subspan(0, 3), 2.0, 0.001, grid);
  const FunctionSolution sol(4, 1, [&](std::span<const double> in, std::span<double> out) { out[0] = ex(in[0]); });
  CHECK(loss_K(b.problem, sol, sim.observed, beta, grid) < 1e-20);
  CHECK_THROWS_AS(sens_bundle(-1.0), ConfigError);
}

// ---------------------------------------------------------------- shift

TEST_CASE("shift nuisances by direct evaluation") {
  const double e2 = logistic(2.0);
  const ShiftNuisance n = shift_nuisance(2.0);
  CHECK(std::abs(n.var_target - e2 * (1 - e2) * (1 - e2)) < 1e-12);
  const double e3 = logistic(3.0);
  CHECK(std::abs(n.var_source - e3 * (1 - e3) * e2) < 1e-12);
  CHECK(std::abs(n.mu - n.var_target - n.var_source) < 1e-15);
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    const double x = rng.uniform(1, 3);
    CHECK(std::abs(shift_nuisance(x).forcing - shift_forcing_general(x)) < 1e-12);
    const ShiftNuisance m = shift_nuisance(x);
    CHECK(std::abs(zeta_star(x) * (1 - m.var_source / m.mu) - m.forcing) < 1e-12);
  }
}

TEST_CASE("shift: closed-form zeta zeroes the residual") {
  const ExampleBundle b = shift_bundle();
  const QuadratureGrid grid = sample_grid(b.problem.t_domain, b.problem.s_domain, 50, 50, 1);
  const FunctionSolution sol(1, 1, [](std::span<const double> in, std::span<double> out) { out[0] = zeta_star(in[0]); });
  const SimulatedData sim = gen_shift(3, 1);
  CHECK(loss_K(b.problem, sol, sim.observed, std::vector<double>{0.0}, grid) < 1e-24);
}

TEST_CASE("beta_star_shift: converged, bounded, matches simulation") {
  const double v = beta_star_shift();
  CHECK(std::abs(beta_star_shift(40000) - v) <= 1e-8);
  CHECK((v > 0.0 && v < 1.0));
  const SimulatedData d = gen_shift(1000000, 13);
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < d.observed.size(); ++i) {
    if (d.observed.at(i, 1) != 0.0) continue;
    const double x = d.observed.at(i, 0), y = d.observed.at(i, 2);
    const double f = logistic(std::sqrt(x));
    s += (y - f) * (y - f);
    ++n;
  }
  CHECK(std::abs(s / n - v) <= 0.003);
  CHECK(std::abs(static_cast<double>(n) / d.observed.size() - shift_target_share()) < 0.002);
}

TEST_CASE("shift plug-in estimate with the exact zeta is close to the target risk") {
  const SimulatedData d = gen_shift(100000, 14);
  CHECK(std::abs(shift_beta_hat(d.observed, zeta_star) - beta_star_shift()) < 0.01);
  const ExampleBundle b = shift_bundle();
  CHECK(std::abs(b.comparators.at("zeta_star")(d)[0] - shift_beta_hat(d.observed, zeta_star)) < 1e-15);
}

// ---------------------------------------------------------------- all bundles

TEST_CASE("bundle kernels, forcings and psi stay finite near the truth") {
  for (const char* name : {"mnar", "sensitivity", "shift"}) {
    CAPTURE(name);
    const ExampleBundle b = make_bundle(name);
    const SimulatedData sim = b.generate(50, 21);
    const QuadratureGrid grid = sample_grid(b.problem.t_domain, b.problem.s_domain, 50, 50, 2);
    Rng rng(22);
    for (int k = 0; k < 10000 / 50; ++k) {
      std::vector<double> beta = b.beta_star;
      for (double& v : beta) v += rng.uniform(-2, 2);
      const Obs o = sim.observed.row(rng.below(sim.observed.size()));
      const std::vector<double> aux = b.problem.eval_aux(o, beta, grid);
      for (Eigen::Index j = 0; j < 50; ++j) {
        const double s = grid.inner_points(0, j), t = grid.outer_points(0, j);
        CHECK(std::isfinite(b.problem.eval_kernel(std::span<const double>(&s, 1), std::span<const double>(&t, 1), o, beta, aux)));
        std::vector<double> c(static_cast<std::size_t>(b.problem.q));
        b.problem.forcing(std::span<const double>(&t, 1), o, beta, aux, c);
        for (double v : c) CHECK(std::isfinite(v));
      }
      const auto zero = zero_solution(b.problem.b_input_dim(), b.problem.q);
      CHECK(PsiEvaluator(b.psi, sim.observed, grid, zero.get()).values(beta).allFinite());
    }
  }
}

TEST_CASE("estimators never see the hidden columns") {
  for (const char* name : {"mnar", "sensitivity", "shift", "toy"}) {
    CAPTURE(name);
    const ExampleBundle b = make_bundle(name);
    const SimulatedData sim = b.generate(5, 1);
    for (const std::string& c : sim.observed.columns()) CHECK(c.rfind(kTruthPrefix, 0) != 0);
    for (const std::string& c : sim.truth.columns()) CHECK_FALSE(sim.observed.has_column(c));

    std::stringstream ss;
    write_dataset_csv(ss, sim);
    const std::string text = ss.str();
    const SimulatedData back = read_dataset_csv(ss);
    CHECK(back.observed.columns() == sim.observed.columns());
    CHECK(back.truth.columns() == sim.truth.columns());
    std::stringstream again(text);
    const Dataset view = read_observed_csv(again);
    CHECK(view.columns() == sim.observed.columns());
    for (std::size_t i = 0; i < view.size(); ++i)
      for (std::size_t j = 0; j < view.width(); ++j) {
        const double a = view.at(i, j), e = sim.observed.at(i, j);
        CHECK(((std::isnan(a) && std::isnan(e)) || a == e));
      }
  }
}

TEST_CASE("registry") {
  CHECK(make_bundle("analytic:degenerate").beta_star[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(make_bundle("nope"), ConfigError);
  BundleOptions opt;
  opt.lambda = 0.01;
  CHECK_THROWS_AS(make_bundle("mnar", opt), ConfigError);
  CHECK(make_bundle("sensitivity", opt).problem.mode.lambda == 0.01);
  CHECK(make_bundle("mnar").arch.width() == 5);
  CHECK(make_bundle("mnar").arch.depth() == 3);
  CHECK(make_bundle("sensitivity").arch.width() == 33);
  CHECK(make_bundle("sensitivity").arch.depth() == 23);
}
