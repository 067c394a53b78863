#include "fredse/examples/registry.hpp"

#include "fredse/error.hpp"
#include "fredse/examples/analytic.hpp"
#include "fredse/examples/mnar.hpp"
#include "fredse/examples/sensitivity.hpp"
#include "fredse/examples/shift.hpp"
#include "fredse/examples/toy.hpp"
#include "fredse/rng.hpp"

namespace fredse {

namespace {

constexpr const char* kAnalyticPrefix = "analytic:";

ExampleBundle analytic_bundle(const std::string& id) {
  AnalyticProblem ap = analytic_problem(id);
  EstimatingEquation eq;
  eq.name = ap.id;
  eq.q = 1;
  eq.probe_points = [](const Dataset&, const QuadratureGrid&) { return Eigen::MatrixXd::Constant(1, 1, 0.5); };
  eq.psi = [](const Dataset& data, const QuadratureGrid&, Params beta, const PsiInputs& b) {
    return Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(data.size()), beta[0] - b.probe(0, 0));
  };
  const double half = 0.5;
  const double target = (*ap.exact)(std::span<const double>(&half, 1))[0];

  BiLevelConfig cfg;
  cfg.j1 = 200;
  cfg.j2 = 200;
  cfg.lr_omega = 1e-3;
  cfg.tol = 1e-8;
  cfg.tol_omega = 1e-3;
  cfg.beta_init = {0.0};
  cfg.grid = GridKind::Gauss;

  auto generate = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    SimulatedData d{Dataset({"o"}), Dataset()};
    for (std::size_t i = 0; i < n; ++i) {
      const double o = rng.uniform();
      d.observed.add_row(std::span<const double>(&o, 1));
    }
    return d;
  };
  return ExampleBundle{"analytic:" + ap.id, std::move(ap.problem), std::move(eq), {target}, NetworkArch(1, 1, 5, 3),
                       cfg, 20, generate, {}};
}

}  // namespace

std::vector<std::string> example_names() {
  std::vector<std::string> out{"mnar", "sensitivity", "shift", "toy"};
  for (const auto& ap : analytic_problems()) out.push_back(kAnalyticPrefix + ap.id);
  return out;
}

ExampleBundle make_bundle(const std::string& name, const BundleOptions& opt) {
  if (opt.lambda && name != "sensitivity") throw ConfigError("lambda", "only the sensitivity example takes lambda");
  if (name == "mnar") return mnar_bundle();
  if (name == "sensitivity") {
    const double lambda = opt.lambda.value_or(0.001);
    if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
    return sens_bundle(lambda);
  }
  if (name == "shift") return shift_bundle();
  if (name == "toy") return toy_bundle();
  if (name.rfind(kAnalyticPrefix, 0) == 0) return analytic_bundle(name.substr(std::string(kAnalyticPrefix).size()));
  throw ConfigError("example", "unknown example '" + name + "'");
}

}  // namespace fredse
