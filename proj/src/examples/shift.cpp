#include "fredse/examples/shift.hpp"

#include <cmath>

#include "fredse/error.hpp"
#include "fredse/rng.hpp"

namespace fredse {

namespace {

constexpr double kMinMu = 1e-12;

double mu_checked(double x) {
  const ShiftNuisance n = shift_nuisance(x);
  if (!(n.mu > kMinMu)) throw NumericError("shift: mu(x) <= 1e-12 at x = " + std::to_string(x));
  return n.mu;
}

}  // namespace

SimulatedData gen_shift(std::size_t n, std::uint64_t seed) {
  SimulatedData d{Dataset({"x", "a", "y"}), Dataset()};
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(1.0, 3.0);
    const double a = rng.bernoulli(expit(x)) ? 1.0 : 0.0;
    const double y = rng.bernoulli(expit(x + a)) ? 1.0 : 0.0;
    const double row[] = {x, a, y};
    d.observed.add_row(row);
  }
  return d;
}

ShiftNuisance shift_nuisance(double x) {
  ShiftNuisance n{};
  n.target_prob = expit(x);
  n.source_prob = expit(x + 1.0);
  n.prob_source = expit(x);
  n.prediction = expit(std::sqrt(x));
  n.var_target = n.target_prob * (1.0 - n.target_prob) * (1.0 - n.prob_source);
  n.var_source = n.source_prob * (1.0 - n.source_prob) * n.prob_source;
  n.mu = n.var_target + n.var_source;
  const double f = n.prediction;
  n.risk = n.target_prob * (1.0 - f) * (1.0 - f) + (1.0 - n.target_prob) * f * f;
  n.forcing = n.var_target * (1.0 - 2.0 * f) / shift_target_share();
  return n;
}

double shift_target_share() {
  static const double share = 1.0 - 0.5 * (std::log1p(std::exp(3.0)) - std::log1p(std::exp(1.0)));
  return share;
}

double shift_forcing_general(double x) {
  const ShiftNuisance n = shift_nuisance(x);
  const double slope = 1.0;  // derivative of the drift map t -> t + 1
  const double matched_source = n.var_source;
  const double f = n.prediction;
  const double loss_gap = (1.0 - f) * (1.0 - f) - f * f;
  return n.var_target * matched_source / (n.var_source * slope * slope) * loss_gap / shift_target_share();
}

double zeta_star(double x) {
  const ShiftNuisance n = shift_nuisance(x);
  return n.forcing / (1.0 - n.var_source / mu_checked(x));
}

double shift_beta_hat(const Dataset& data, const std::function<double(double)>& zeta) {
  const std::size_t xi = data.column_index("x");
  const std::size_t ai = data.column_index("a");
  const std::size_t yi = data.column_index("y");
  const double rho = shift_target_share();
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Obs o = data.row(i);
    if (o[ai] != 0.0) continue;
    const double x = o[xi];
    const ShiftNuisance n = shift_nuisance(x);
    sum += n.risk / rho + (o[yi] - n.target_prob) * zeta(x) / mu_checked(x);
  }
  return sum / static_cast<double>(data.size());
}

double beta_star_shift(int intervals) {
  if (intervals < 2 || intervals % 2 != 0) throw ConfigError("intervals", "must be even and >= 2");
  const double lo = 1.0;
  const double h = 2.0 / intervals;
  double num = 0.0;
  double den = 0.0;
  for (int k = 0; k <= intervals; ++k) {
    const double x = lo + k * h;
    const double c = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    const ShiftNuisance n = shift_nuisance(x);
    num += c * n.risk * (1.0 - n.prob_source);
    den += c * (1.0 - n.prob_source);
  }
  return num / den;
}

ExampleBundle shift_bundle() {
  const Domain dom = Domain::interval(1.0, 3.0);
  FredholmProblem prob("shift", 1, ResidualMode::second_kind(), dom, dom);
  prob.separable = SeparableKernel{0, {}, {}};
  prob.forcing = [](Point t, Obs, Params, Aux, std::span<double> out) { out[0] = -shift_nuisance(t[0]).forcing; };
  prob.weight = [](Point t, Obs, Params, Aux) { return shift_nuisance(t[0]).var_target / mu_checked(t[0]); };
  prob.observation_dependent = false;
  prob.beta_dependent = false;

  EstimatingEquation eq;
  eq.name = "shift";
  eq.q = 1;
  eq.probe_points = [](const Dataset& data, const QuadratureGrid&) {
    const std::size_t xi = data.column_index("x");
    Eigen::MatrixXd pts(1, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) pts(0, static_cast<Eigen::Index>(i)) = data.row(i)[xi];
    return pts;
  };
  eq.psi = [](const Dataset& data, const QuadratureGrid&, Params beta, const PsiInputs& b) {
    const std::size_t xi = data.column_index("x");
    const std::size_t ai = data.column_index("a");
    const std::size_t yi = data.column_index("y");
    const double rho = shift_target_share();
    Eigen::MatrixXd out(1, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Obs o = data.row(i);
      double v = -beta[0];
      if (o[ai] == 0.0) {
        const ShiftNuisance n = shift_nuisance(o[xi]);
        v += n.risk / rho + (o[yi] - n.target_prob) * b.probe(0, static_cast<Eigen::Index>(i)) / mu_checked(o[xi]);
      }
      out(0, static_cast<Eigen::Index>(i)) = v;
    }
    return out;
  };

  BiLevelConfig cfg;
  cfg.lr_omega = 1e-3;
  cfg.tol = 1e-8;
  cfg.tol_omega = 1e-3;
  cfg.beta_init = {0.0};

  std::map<std::string, Comparator> comps;
  comps["zeta_star"] = [](const SimulatedData& d) { return std::vector<double>{shift_beta_hat(d.observed, zeta_star)}; };
  return ExampleBundle{"shift", std::move(prob), std::move(eq), {beta_star_shift()}, NetworkArch(1, 1, 5, 3), cfg,
                       10000, gen_shift, std::move(comps)};
}

}  // namespace fredse
