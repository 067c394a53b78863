#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fredse/bilevel.hpp"
#include "fredse/error.hpp"
#include "fredse/examples/mnar.hpp"
#include "fredse/examples/shift.hpp"
#include "fredse/examples/toy.hpp"

using namespace fredse;

namespace {

Dataset column(std::initializer_list<double> values) {
  Dataset d({"o"});
  for (double v : values) d.add_row(std::span<const double>(&v, 1));
  return d;
}

// psi(O, beta) = sign * (beta - O); ignores b.
EstimatingEquation location(double sign = 1.0) {
  EstimatingEquation eq;
  eq.name = "location";
  eq.q = 1;
  eq.psi = [sign](const Dataset& data, const QuadratureGrid&, Params beta, const PsiInputs&) {
    Eigen::MatrixXd out(1, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) out(0, static_cast<Eigen::Index>(i)) = sign * (beta[0] - data.at(i, 0));
    return out;
  };
  return eq;
}

const QuadratureGrid& unit_grid() {
  static const QuadratureGrid g = gauss_grid(Domain::interval(0, 1), Domain::interval(0, 1), 2, 2);
  return g;
}

double fingerprint(const Eigen::VectorXd& v) {
  // Order-sensitive mix of the raw values; any change in any weight changes it.
  double h = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) h = h * 1.000001 + v[k] * static_cast<double>(k + 1);
  return h;
}

}  // namespace

TEST_CASE("loss_psi on a location equation") {
  const Dataset d = column({1, 2, 3});
  const EstimatingEquation eq = location();
  CHECK(loss_psi(eq, std::vector<double>{2.0}, nullptr, d, unit_grid()) == 0.0);
  CHECK(loss_psi(eq, std::vector<double>{0.0}, nullptr, d, unit_grid()) == 4.0);

  EstimatingEquation zero = eq;
  zero.psi = [](const Dataset& data, const QuadratureGrid&, Params, const PsiInputs&) {
    return Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(data.size()));
  };
  CHECK(loss_psi(zero, std::vector<double>{0.3}, nullptr, d, unit_grid()) == 0.0);
}

TEST_CASE("loss_psi names the first non-finite observation") {
  const Dataset d = column({1, std::nan(""), 3});
  try {
    loss_psi(location(), std::vector<double>{0.0}, nullptr, d, unit_grid());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("observation 1") != std::string::npos);
  }
}

TEST_CASE("grad_beta by central differences") {
  const Dataset d = column({1, 2, 3});
  const EstimatingEquation eq = location();
  const Eigen::VectorXd g = grad_beta(eq, std::vector<double>{0.0}, nullptr, d, unit_grid(), 1e-5);
  CHECK(std::abs(g[0] + 4.0) < 1e-8);
  CHECK(std::abs(grad_beta(eq, std::vector<double>{2.0}, nullptr, d, unit_grid(), 1e-5)[0]) < 1e-10);
  const Dataset p = column({3, 1, 2});
  CHECK(grad_beta(eq, std::vector<double>{0.7}, nullptr, p, unit_grid(), 1e-5)[0] ==
        doctest::Approx(grad_beta(eq, std::vector<double>{0.7}, nullptr, d, unit_grid(), 1e-5)[0]).epsilon(1e-12));
}

TEST_CASE("config validation") {
  BiLevelConfig cfg;
  cfg.beta_init = {0.0};
  CHECK_NOTHROW(cfg.validate(1));
  cfg.gamma = 0;
  CHECK_THROWS_AS(cfg.validate(1), ConfigError);
  cfg.gamma = 10;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg.lr_beta = -1;
  CHECK_THROWS_AS(cfg.validate(1), ConfigError);
  CHECK(BiLevelConfig{}.omega_tolerance() == BiLevelConfig{}.tol);
}

TEST_CASE("toy fixed point: beta goes to b*(0.5) = 1") {
  const ExampleBundle b = toy_bundle();
  const SimulatedData sim = b.generate(20, 0);
  const EstimateReport r = solve_bilevel(b.problem, b.psi, sim.observed, b.arch, b.config);
  CHECK(r.converged);
  CHECK(std::abs(r.beta_hat[0] - 1.0) < 1e-2);
  CHECK(static_cast<int>(r.trace.size()) == r.iterations);
  CHECK(r.trace.front().beta == b.config.beta_init);
  CHECK(r.beta_step < b.config.tol);
  CHECK(r.omega_step < b.config.omega_tolerance());
}

TEST_CASE("runs are pure functions of their inputs") {
  const ExampleBundle b = toy_bundle();
  const SimulatedData sim = b.generate(20, 1);
  BiLevelConfig cfg = b.config;
  cfg.seed = 99;
  cfg.grid = GridKind::MonteCarlo;
  const EstimateReport x = solve_bilevel(b.problem, b.psi, sim.observed, b.arch, cfg);
  const EstimateReport y = solve_bilevel(b.problem, b.psi, sim.observed, b.arch, cfg);
  CHECK(x.beta_hat == y.beta_hat);
  CHECK(x.iterations == y.iterations);
  CHECK(*x.weights == *y.weights);
  REQUIRE(x.trace.size() == y.trace.size());
  for (std::size_t m = 0; m < x.trace.size(); ++m) {
    CHECK(x.trace[m].beta == y.trace[m].beta);
    CHECK(x.trace[m].loss_K == y.trace[m].loss_K);
  }
}

TEST_CASE("gamma = 0 is rejected before any work") {
  const ExampleBundle b = toy_bundle();
  BiLevelConfig cfg = b.config;
  cfg.gamma = 0;
  CHECK_THROWS_AS(solve_bilevel(b.problem, b.psi, b.generate(5, 0).observed, b.arch, cfg), ConfigError);
}

TEST_CASE("coupled MNAR run: converged reports obey the stopping rule and the freezing contract") {
  const ExampleBundle b = mnar_bundle();
  const SimulatedData sim = b.generate(200, 3);
  BiLevelConfig cfg = b.config;
  cfg.j1 = cfg.j2 = 100;
  cfg.max_iter = 40;
  cfg.tol = 1e-3;
  cfg.tol_omega = 5e-2;

  std::vector<double> beta_before;
  double omega_before = 0.0;
  int beta_steps = 0, omega_steps = 0;
  RunHooks hooks;
  hooks.on_step = [&](const StepProbe& s) {
    switch (s.phase) {
      case Phase::BeforeBeta:
        omega_before = fingerprint(*s.omega);
        break;
      case Phase::AfterBeta:
        CHECK(fingerprint(*s.omega) == omega_before);
        ++beta_steps;
        break;
      case Phase::BeforeOmega:
        beta_before = *s.beta;
        break;
      case Phase::AfterOmega:
        CHECK(*s.beta == beta_before);
        ++omega_steps;
        break;
    }
  };
  const EstimateReport r = solve_bilevel(b.problem, b.psi, sim.observed, b.arch, cfg, hooks);
  CHECK(beta_steps == r.iterations);
  CHECK(omega_steps == r.iterations);
  CHECK(static_cast<int>(r.trace.size()) == r.iterations);
  CHECK(r.trace.front().beta == cfg.beta_init);
  if (r.converged) {
    CHECK(r.beta_step < cfg.tol);
    CHECK(r.omega_step < cfg.omega_tolerance());
  }
  for (const TraceRow& row : r.trace) CHECK(row.loss_K >= 0.0);
}

TEST_CASE("divergence carries the trace so far") {
  const ExampleBundle b = toy_bundle();
  EstimatingEquation eq = b.psi;
  eq.psi = [](const Dataset& data, const QuadratureGrid&, Params beta, const PsiInputs&) {
    return Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(data.size()), std::exp(50.0 * (1.0 + std::abs(beta[0]))) * 1e-10);
  };
  BiLevelConfig cfg = b.config;
  cfg.max_iter = 50;
  try {
    solve_bilevel(b.problem, eq, b.generate(5, 0).observed, b.arch, cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK_FALSE(e.trace().empty());
  }
}

TEST_CASE("score update rests at the root of the averaged equation") {
  const ExampleBundle toy = toy_bundle();
  EstimatingEquation eq = location(-1.0);  // d psi / d beta < 0
  const Dataset d = column({0.5, 1.0, 2.1});
  BiLevelConfig cfg = toy.config;
  cfg.outer = OuterUpdate::Score;
  cfg.max_iter = 5000;
  const EstimateReport r = solve_bilevel_polynomial(toy.problem, eq, d, 0, cfg);
  CHECK(r.converged);
  CHECK(std::abs(r.beta_hat[0] - 1.2) < 1e-4);
}

TEST_CASE("polynomial inner solver drives the toy problem exactly") {
  const ExampleBundle b = toy_bundle();
  const EstimateReport r = solve_bilevel_polynomial(b.problem, b.psi, b.generate(20, 0).observed, 0, b.config);
  CHECK(r.converged);
  CHECK(r.final_loss_K < 1e-20);
  CHECK(std::abs(r.beta_hat[0] - 1.0) < 1e-5);
  REQUIRE(r.coefficients.has_value());
  CHECK(r.solution()->evaluate(Eigen::MatrixXd::Constant(1, 1, 0.3))(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("decoupled shortcut and alternating path agree on the shift example") {
  const ExampleBundle b = shift_bundle();
  const SimulatedData sim = b.generate(2000, 4);
  BiLevelConfig cfg = b.config;
  cfg.j1 = cfg.j2 = 200;
  cfg.seed = 4;
  // The exact inner fit gives both paths the same b, so any gap comes from the scheduling alone.
  const EstimateReport fast = solve_bilevel_polynomial(b.problem, b.psi, sim.observed, 5, cfg);
  cfg.allow_decoupled = false;
  const EstimateReport slow = solve_bilevel_polynomial(b.problem, b.psi, sim.observed, 5, cfg);
  CHECK(fast.converged);
  CHECK(slow.converged);
  CHECK(std::abs(fast.beta_hat[0] - slow.beta_hat[0]) <= 10 * cfg.tol);
}
