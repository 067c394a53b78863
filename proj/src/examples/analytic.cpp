#include "fredse/examples/analytic.hpp"

#include "fredse/error.hpp"

namespace fredse {

namespace {

FredholmProblem base(const std::string& name, ResidualMode mode) {
  FredholmProblem p(name, 1, mode, Domain::interval(0.0, 1.0), Domain::interval(0.0, 1.0));
  p.observation_dependent = false;
  p.beta_dependent = false;
  return p;
}

std::shared_ptr<SolutionFn> scalar_solution(std::function<double(double)> f) {
  return std::make_shared<FunctionSolution>(1, 1, [f](std::span<const double> in, std::span<double> out) { out[0] = f(in[0]); });
}

SeparableKernel zero_kernel() { return SeparableKernel{0, {}, {}}; }

AnalyticProblem degenerate() {
  FredholmProblem p = base("degenerate", ResidualMode::second_kind());
  p.kernel = [](Point s, Point t, Obs, Params, Aux) { return 0.5 * s[0] * t[0]; };
  p.separable = SeparableKernel{
      1, [](Point s, Obs, Params, Aux, std::span<double> out) { out[0] = 0.5 * s[0]; },
      [](Point t, Obs, Params, Aux, std::span<double> out) { out[0] = t[0]; }};
  p.forcing = [](Point t, Obs, Params, Aux, std::span<double> out) { out[0] = -5.0 / 6.0 * t[0]; };
  return {"degenerate", std::move(p), scalar_solution([](double t) { return t; })};
}

AnalyticProblem zero_kernel_problem() {
  FredholmProblem p = base("zero_kernel", ResidualMode::second_kind());
  p.separable = zero_kernel();
  auto c = [](double t) { return 1.0 - 2.0 * t + 3.0 * t * t; };
  p.forcing = [c](Point t, Obs, Params, Aux, std::span<double> out) { out[0] = c(t[0]); };
  return {"zero_kernel", std::move(p), scalar_solution([c](double t) { return -c(t); })};
}

AnalyticProblem tikhonov_problem() {
  constexpr double lambda = 0.5;
  FredholmProblem p = base("tikhonov", ResidualMode::tikhonov(lambda));
  p.separable = zero_kernel();
  auto c = [](double t) { return t * t - 0.5 * t; };
  p.forcing = [c](Point t, Obs, Params, Aux, std::span<double> out) { out[0] = c(t[0]); };
  return {"tikhonov", std::move(p), scalar_solution([c](double t) { return c(t) / lambda; })};
}

}  // namespace

std::vector<AnalyticProblem> analytic_problems() { return {degenerate(), zero_kernel_problem(), tikhonov_problem()}; }

AnalyticProblem analytic_problem(const std::string& id) {
  for (auto& a : analytic_problems()) {
    if (a.id == id) return a;
  }
  throw ConfigError("problem", "unknown analytic problem '" + id + "' (degenerate, zero_kernel, tikhonov)");
}

Dataset placeholder_data() {
  Dataset d({"o"});
  const double zero = 0.0;
  d.add_row(std::span<const double>(&zero, 1));
  return d;
}

}  // namespace fredse
