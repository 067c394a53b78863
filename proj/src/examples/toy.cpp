#include "fredse/examples/toy.hpp"

#include "fredse/rng.hpp"

namespace fredse {

ExampleBundle toy_bundle() {
  FredholmProblem p("toy", 1, ResidualMode::second_kind(), Domain::interval(0.0, 1.0), Domain::interval(0.0, 1.0));
  p.separable = SeparableKernel{0, {}, {}};
  p.forcing = [](Point, Obs, Params, Aux, std::span<double> out) { out[0] = -1.0; };
  p.observation_dependent = false;
  p.beta_dependent = false;

  EstimatingEquation eq;
  eq.name = "toy";
  eq.q = 1;
  eq.probe_points = [](const Dataset&, const QuadratureGrid&) { return Eigen::MatrixXd::Constant(1, 1, 0.5); };
  eq.psi = [](const Dataset& data, const QuadratureGrid&, Params beta, const PsiInputs& b) {
    return Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(data.size()), beta[0] - b.probe(0, 0));
  };

  BiLevelConfig cfg;
  cfg.j1 = 200;
  cfg.j2 = 200;
  cfg.lr_omega = 1e-3;
  cfg.tol = 1e-8;
  cfg.tol_omega = 1e-3;
  cfg.beta_init = {0.0};

  auto generate = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    SimulatedData d{Dataset({"o"}), Dataset()};
    for (std::size_t i = 0; i < n; ++i) {
      const double o = rng.uniform();
      d.observed.add_row(std::span<const double>(&o, 1));
    }
    return d;
  };
  return ExampleBundle{"toy", std::move(p), std::move(eq), {1.0}, NetworkArch(1, 1, 5, 3), cfg, 20, generate, {}};
}

}  // namespace fredse
