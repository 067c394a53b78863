#include "fredse/examples/mnar.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "fredse/error.hpp"
#include "fredse/rng.hpp"

namespace fredse {

namespace {

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
constexpr double kMinDenominator = 1e-12;

enum Col : std::size_t { X = 0, A = 1, Y = 2 };

Eigen::ArrayXd density_row(const Eigen::ArrayXd& t, double mu) {
  return kInvSqrt2Pi * (-0.5 * (t - mu).square()).exp();
}

// Per-observation auxiliaries: {D, N_1, N_2}.
std::vector<double> aux_values(const Eigen::ArrayXd& s, const Eigen::ArrayXd& eta, double w, double x, Params beta) {
  const double mu = beta[0] + beta[1] * x;
  const Eigen::ArrayXd p = density_row(s, mu);
  const double d = w * (p * (1.0 - eta)).sum();
  if (!(d > kMinDenominator)) {
    throw NumericError("working missingness model leaves int p(1 - eta) <= 1e-12 at x = " + std::to_string(x));
  }
  const double n1 = w * (p * (s - mu) * eta).sum();
  return {d, n1, x * n1};
}

Eigen::ArrayXd eta_values(const Eigen::MatrixXd& nodes, const std::function<double(double)>& eta) {
  Eigen::ArrayXd out(nodes.cols());
  for (Eigen::Index j = 0; j < nodes.cols(); ++j) out[j] = eta(nodes(0, j));
  return out;
}

// The discretisation asks for eta on the same node set once per
// observation; keep the last result per thread.
using EtaPtr = std::shared_ptr<const std::function<double(double)>>;

const Eigen::ArrayXd& eta_on(const Eigen::MatrixXd& nodes, const EtaPtr& eta) {
  struct Entry {
    EtaPtr fn;
    Eigen::MatrixXd nodes;
    Eigen::ArrayXd values;
  };
  thread_local Entry last;
  if (last.fn != eta || last.nodes.cols() != nodes.cols() || last.nodes != nodes) {
    last.values = eta_values(nodes, *eta);
    last.nodes = nodes;
    last.fn = eta;
  }
  return last.values;
}

}  // namespace

double mnar_default_eta(double y) { return expit(1.0 - y); }

SimulatedData gen_mnar(std::size_t n, std::uint64_t seed, const MnarOptions& opt) {
  Rng rng(seed);
  SimulatedData d{Dataset({"x", "a", "y"}), Dataset({"y_full"})};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal(0.5, 0.5);
    const double y = opt.beta_star[0] + opt.beta_star[1] * x + opt.noise_sd * rng.normal();
    const double a = rng.bernoulli(expit(1.0 + y)) ? 1.0 : 0.0;
    const double row[3] = {x, a, a == 1.0 ? y : nan};
    d.observed.add_row(row);
    d.truth.add_row(std::span<const double>(&y, 1));
  }
  return d;
}

MnarTerms mnar_terms(double x, std::array<double, 2> beta, const Eigen::MatrixXd& nodes, double volume,
                     const std::function<double(double)>& eta) {
  const Eigen::ArrayXd s = nodes.row(0).transpose().array();
  const auto v = aux_values(s, eta_values(nodes, eta), volume / static_cast<double>(nodes.cols()), x, beta);
  return MnarTerms{v[0], {v[1], v[2]}};
}

ExampleBundle mnar_bundle(std::function<double(double)> working_eta) {
  const Domain dom = Domain::interval(-5.0, 5.0);
  FredholmProblem p("mnar", 2, ResidualMode::second_kind(), dom, dom);
  p.pooling = Pooling::Averaged;
  EtaPtr eta = std::make_shared<const std::function<double(double)>>(std::move(working_eta));

  p.aux = [eta](Obs o, Params beta, const QuadratureGrid& grid) {
    const Eigen::ArrayXd s = grid.inner_points.row(0).transpose().array();
    return aux_values(s, eta_on(grid.inner_points, eta), grid.inner_weight(), o[X], beta);
  };

  // Stored with K and C negated so that the residual int K b - C - w b
  // vanishes exactly when int K b + w b = C.
  p.kernel = [eta](Point s, Point t, Obs o, Params beta, Aux aux) {
    const double mu = beta[0] + beta[1] * o[X];
    return -normal_pdf(s[0] - mu) * (*eta)(s[0]) * normal_pdf(t[0] - mu) / aux[0];
  };
  p.separable = SeparableKernel{
      1,
      [eta](Point s, Obs o, Params beta, Aux aux, std::span<double> out) {
        out[0] = -normal_pdf(s[0] - (beta[0] + beta[1] * o[X])) * (*eta)(s[0]) / aux[0];
      },
      [](Point t, Obs o, Params beta, Aux, std::span<double> out) {
        out[0] = normal_pdf(t[0] - (beta[0] + beta[1] * o[X]));
      }};
  p.forcing = [](Point t, Obs o, Params beta, Aux aux, std::span<double> out) {
    const double x = o[X];
    const double mu = beta[0] + beta[1] * x;
    const double pt = normal_pdf(t[0] - mu);
    const double r = t[0] - mu;
    out[0] = -pt * (r + aux[1] / aux[0]);
    out[1] = -pt * (x * r + aux[2] / aux[0]);
  };
  p.weight = [](Point t, Obs o, Params beta, Aux) { return normal_pdf(t[0] - (beta[0] + beta[1] * o[X])); };

  BatchEval be;
  be.left = [eta](const Eigen::MatrixXd& pts, Obs o, Params beta, Aux aux) {
    const Eigen::ArrayXd s = pts.row(0).transpose().array();
    const Eigen::ArrayXd v = -density_row(s, beta[0] + beta[1] * o[X]) * eta_on(pts, eta) / aux[0];
    return Eigen::MatrixXd(v.matrix().transpose());
  };
  be.right = [](const Eigen::MatrixXd& pts, Obs o, Params beta, Aux) {
    const Eigen::ArrayXd t = pts.row(0).transpose().array();
    return Eigen::MatrixXd(density_row(t, beta[0] + beta[1] * o[X]).matrix().transpose());
  };
  be.weight = be.right;
  be.forcing = [](const Eigen::MatrixXd& pts, Obs o, Params beta, Aux aux) {
    const double x = o[X];
    const double mu = beta[0] + beta[1] * x;
    const Eigen::ArrayXd t = pts.row(0).transpose().array();
    const Eigen::ArrayXd pt = density_row(t, mu);
    Eigen::MatrixXd out(2, pts.cols());
    out.row(0) = (-pt * ((t - mu) + aux[1] / aux[0])).matrix().transpose();
    out.row(1) = (-pt * (x * (t - mu) + aux[2] / aux[0])).matrix().transpose();
    return out;
  };
  p.batch = be;

  EstimatingEquation eq;
  eq.name = "mnar";
  eq.q = 2;
  eq.inner = InnerValues::Shared;
  eq.probe_points = [](const Dataset& data, const QuadratureGrid&) {
    Eigen::MatrixXd probe(1, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) probe(0, static_cast<Eigen::Index>(i)) = data.at(i, A) == 1.0 ? data.at(i, Y) : 0.0;
    return probe;
  };
  eq.psi = [eta](const Dataset& data, const QuadratureGrid& grid, Params beta, const PsiInputs& b) {
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd out(2, n);
    const Eigen::ArrayXd s = grid.inner_points.row(0).transpose().array();
    const Eigen::ArrayXd e = eta_on(grid.inner_points, eta);
    const double w = grid.inner_weight();
    const Eigen::ArrayXd we = w * e;
    const Eigen::ArrayXd b0 = we * b.inner.row(0).transpose().array();
    const Eigen::ArrayXd b1 = we * b.inner.row(1).transpose().array();
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(i);
      const double x = data.at(row, X);
      const double mu = beta[0] + beta[1] * x;
      if (data.at(row, A) == 1.0) {
        const double r = data.at(row, Y) - mu;
        out(0, i) = r - b.probe(0, i);
        out(1, i) = x * r - b.probe(1, i);
        continue;
      }
      const Eigen::ArrayXd pi = density_row(s, mu);
      const double d = w * (pi * (1.0 - e)).sum();
      if (!(d > kMinDenominator)) {
        throw NumericError("working missingness model leaves int p(1 - eta) <= 1e-12 at x = " + std::to_string(x));
      }
      const double n1 = (pi * (s - mu) * we).sum();
      out(0, i) = ((pi * b0).sum() - n1) / d;
      out(1, i) = ((pi * b1).sum() - x * n1) / d;
    }
    return out;
  };

  BiLevelConfig cfg;
  cfg.beta_init = {0.0, 0.0};
  cfg.outer = OuterUpdate::Score;
  cfg.lr_omega = 1e-3;
  cfg.tol_omega = 2e-3;

  auto generate = [](std::size_t n, std::uint64_t seed) { return gen_mnar(n, seed); };
  std::map<std::string, Comparator> comps{{"oracle", mnar_oracle}, {"biased", mnar_biased}};
  return ExampleBundle{"mnar", std::move(p), std::move(eq), {0.25, -0.5}, NetworkArch(1, 2, 5, 3), cfg, 500,
                       generate, comps};
}

std::vector<double> mnar_oracle(const SimulatedData& data) {
  const Dataset& o = data.observed;
  const std::size_t yf = data.truth.column_index("y_full");
  Eigen::MatrixXd Xm(static_cast<Eigen::Index>(o.size()), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(o.size()));
  for (std::size_t i = 0; i < o.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Xm(r, 0) = 1.0;
    Xm(r, 1) = o.at(i, X);
    y[r] = data.truth.at(i, yf);
  }
  const Eigen::VectorXd b = ols(Xm, y);
  return {b[0], b[1]};
}

std::vector<double> mnar_biased(const SimulatedData& data) {
  const Dataset& o = data.observed;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o.at(i, A) == 1.0) rows.push_back(i);
  }
  Eigen::MatrixXd Xm(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    Xm(r, 0) = 1.0;
    Xm(r, 1) = o.at(rows[k], X);
    y[r] = o.at(rows[k], Y);
  }
  const Eigen::VectorXd b = ols(Xm, y);
  return {b[0], b[1]};
}

}  // namespace fredse
