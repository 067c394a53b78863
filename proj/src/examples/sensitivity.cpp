#include "fredse/examples/sensitivity.hpp"

#include <cmath>

#include "fredse/error.hpp"
#include "fredse/rng.hpp"

namespace fredse {

namespace {

constexpr double kMinMass = 1e-300;

// Rows r = y + 2a of p(y, a | x, u) at every u.
Eigen::Array4Xd joint_rows(const Eigen::ArrayXd& u, double s, double beta) {
  Eigen::Array4Xd out(4, u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double pa = expit(3.0 * s + 2.0 * u[j]);
    const double py0 = expit(4.0 * s + 2.0 * u[j]);
    const double py1 = expit(4.0 * s + beta + 2.0 * u[j]);
    out(0, j) = (1.0 - py0) * (1.0 - pa);
    out(1, j) = py0 * (1.0 - pa);
    out(2, j) = (1.0 - py1) * pa;
    out(3, j) = py1 * pa;
  }
  return out;
}

// Working score of cell r at every u; zero for the a = 0 cells.
Eigen::Array4Xd score_rows(const Eigen::ArrayXd& u, double s, double beta) {
  Eigen::Array4Xd out = Eigen::Array4Xd::Zero(4, u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double py1 = expit(4.0 * s + beta + 2.0 * u[j]);
    out(2, j) = -py1;
    out(3, j) = 1.0 - py1;
  }
  return out;
}

Eigen::ArrayXd eta_on(const Eigen::ArrayXd& u, std::span<const double> x, const WorkingDensity& eta) {
  Eigen::ArrayXd out(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) out[j] = eta(u[j], x);
  return out;
}

struct Cells {
  Eigen::Array4d g;  // int p_r eta
  Eigen::Array4d c;  // int s_r p_r eta / g_r
};

Cells cell_integrals(const Eigen::ArrayXd& u, const Eigen::ArrayXd& e, double w, double s, double beta) {
  const Eigen::Array4Xd pr = joint_rows(u, s, beta);
  const Eigen::Array4Xd sr = score_rows(u, s, beta);
  Cells out;
  for (int r = 0; r < 4; ++r) {
    out.g[r] = w * (pr.row(r).transpose() * e).sum();
    if (!(out.g[r] > kMinMass)) throw NumericError("working mixture puts no mass on cell " + std::to_string(r));
    out.c[r] = w * (sr.row(r).transpose() * pr.row(r).transpose() * e).sum() / out.g[r];
  }
  return out;
}

}  // namespace

double alternating_sum(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (j % 2 == 0 ? 1.0 : -1.0) * x[j];
  return s;
}

double sens_default_eta(double u, std::span<const double>) { return (u >= -0.5 && u <= 0.5) ? 1.0 : 0.0; }

double sens_joint(int y, int a, double s, double u, double beta) {
  const double pa = expit(3.0 * s + 2.0 * u);
  const double py = expit(4.0 * s + beta * a + 2.0 * u);
  return (y == 1 ? py : 1.0 - py) * (a == 1 ? pa : 1.0 - pa);
}

double sens_working_score(int y, int a, double s, double u, double beta) {
  return a * (y - expit(4.0 * s + beta * a + 2.0 * u));
}

SimulatedData gen_sens(std::size_t n, std::uint64_t seed, int p, double beta_star) {
  if (p < 2) throw ConfigError("p", "needs at least two covariates");
  std::vector<std::string> cols;
  for (int j = 1; j <= p; ++j) cols.push_back("x" + std::to_string(j));
  cols.push_back("a");
  cols.push_back("y");
  SimulatedData d{Dataset(cols), Dataset({"u"})};
  Rng rng(seed);
  std::vector<double> row(static_cast<std::size_t>(p) + 2);
  const double sd_u = std::sqrt(0.1);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = rng.uniform();
    const std::span<const double> x(row.data(), static_cast<std::size_t>(p));
    const double u = row[0] - row[1] * row[1] + sd_u * rng.normal();
    const double s = alternating_sum(x);
    const double a = rng.bernoulli(expit(3.0 * s + 2.0 * u)) ? 1.0 : 0.0;
    const double y = rng.bernoulli(expit(4.0 * s + beta_star * a + 2.0 * u)) ? 1.0 : 0.0;
    row[static_cast<std::size_t>(p)] = a;
    row[static_cast<std::size_t>(p) + 1] = y;
    d.observed.add_row(row);
    d.truth.add_row(std::span<const double>(&u, 1));
  }
  return d;
}

ExampleBundle sens_bundle(double lambda, int p, WorkingDensity working_eta) {
  if (p < 2) throw ConfigError("p", "needs at least two covariates");
  const Domain dom = Domain::interval(-0.5, 0.5);
  FredholmProblem prob("sensitivity", 1, ResidualMode::tikhonov(lambda), dom, dom);
  auto eta = std::make_shared<WorkingDensity>(std::move(working_eta));
  const auto pp = static_cast<std::size_t>(p);
  for (std::size_t j = 0; j < pp; ++j) prob.b_covariates.push_back(j);
  auto xs = [pp](Obs o) { return o.subspan(0, pp); };

  // aux = g_0..g_3, c_0..c_3
  prob.aux = [eta, xs](Obs o, Params beta, const QuadratureGrid& grid) {
    const Eigen::ArrayXd u = grid.inner_points.row(0).transpose().array();
    const Cells cells = cell_integrals(u, eta_on(u, xs(o), *eta), grid.inner_weight(), alternating_sum(xs(o)), beta[0]);
    std::vector<double> out(8);
    for (int r = 0; r < 4; ++r) {
      out[static_cast<std::size_t>(r)] = cells.g[r];
      out[static_cast<std::size_t>(r) + 4] = cells.c[r];
    }
    return out;
  };

  auto one = [](double v) { return Eigen::ArrayXd::Constant(1, v); };
  prob.separable = SeparableKernel{
      4,
      [eta, xs, one](Point u, Obs o, Params beta, Aux aux, std::span<double> out) {
        const Eigen::Array4Xd pr = joint_rows(one(u[0]), alternating_sum(xs(o)), beta[0]);
        const double e = (*eta)(u[0], xs(o));
        for (int r = 0; r < 4; ++r) out[static_cast<std::size_t>(r)] = pr(r, 0) * e / aux[static_cast<std::size_t>(r)];
      },
      [xs, one](Point u, Obs o, Params beta, Aux, std::span<double> out) {
        const Eigen::Array4Xd pr = joint_rows(one(u[0]), alternating_sum(xs(o)), beta[0]);
        for (int r = 0; r < 4; ++r) out[static_cast<std::size_t>(r)] = pr(r, 0);
      }};
  prob.kernel = [eta, xs, one](Point s, Point t, Obs o, Params beta, Aux aux) {
    const double sx = alternating_sum(xs(o));
    const Eigen::Array4Xd ps = joint_rows(one(s[0]), sx, beta[0]);
    const Eigen::Array4Xd pt = joint_rows(one(t[0]), sx, beta[0]);
    double k = 0.0;
    for (int r = 0; r < 4; ++r) k += ps(r, 0) * pt(r, 0) / aux[static_cast<std::size_t>(r)];
    return k * (*eta)(s[0], xs(o));
  };
  prob.forcing = [xs, one](Point u, Obs o, Params beta, Aux aux, std::span<double> out) {
    const Eigen::Array4Xd pr = joint_rows(one(u[0]), alternating_sum(xs(o)), beta[0]);
    double c = 0.0;
    for (int r = 0; r < 4; ++r) c += aux[static_cast<std::size_t>(r) + 4] * pr(r, 0);
    out[0] = c;
  };

  BatchEval be;
  be.left = [eta, xs](const Eigen::MatrixXd& pts, Obs o, Params beta, Aux aux) {
    const Eigen::ArrayXd u = pts.row(0).transpose().array();
    Eigen::Array4Xd pr = joint_rows(u, alternating_sum(xs(o)), beta[0]);
    const Eigen::ArrayXd e = eta_on(u, xs(o), *eta);
    for (int r = 0; r < 4; ++r) pr.row(r) *= e.transpose() / aux[static_cast<std::size_t>(r)];
    return Eigen::MatrixXd(pr.matrix());
  };
  be.right = [xs](const Eigen::MatrixXd& pts, Obs o, Params beta, Aux) {
    const Eigen::ArrayXd u = pts.row(0).transpose().array();
    return Eigen::MatrixXd(joint_rows(u, alternating_sum(xs(o)), beta[0]).matrix());
  };
  be.forcing = [xs](const Eigen::MatrixXd& pts, Obs o, Params beta, Aux aux) {
    const Eigen::ArrayXd u = pts.row(0).transpose().array();
    const Eigen::Matrix4Xd pr = joint_rows(u, alternating_sum(xs(o)), beta[0]).matrix();
    const Eigen::RowVector4d c(aux[4], aux[5], aux[6], aux[7]);
    return Eigen::MatrixXd(c * pr);
  };
  prob.batch = be;

  EstimatingEquation eq;
  eq.name = "sensitivity";
  eq.q = 1;
  eq.inner = InnerValues::PerObservation;
  eq.inner_covariates = prob.b_covariates;
  eq.psi = [eta, xs, pp](const Dataset& data, const QuadratureGrid& grid, Params beta, const PsiInputs& b) {
    const Eigen::ArrayXd u = grid.inner_points.row(0).transpose().array();
    const auto j2 = u.size();
    Eigen::MatrixXd out(1, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Obs o = data.row(i);
      const int a = static_cast<int>(o[pp]);
      const int y = static_cast<int>(o[pp + 1]);
      const int r = y + 2 * a;
      const double sx = alternating_sum(xs(o));
      const Eigen::ArrayXd wgt = joint_rows(u, sx, beta[0]).row(r).transpose() * eta_on(u, xs(o), *eta);
      const double mass = wgt.sum();
      if (!(mass > kMinMass)) throw NumericError("working mixture puts no mass on observation " + std::to_string(i));
      const Eigen::ArrayXd score = score_rows(u, sx, beta[0]).row(r).transpose();
      const Eigen::ArrayXd bi = b.inner.block(0, static_cast<Eigen::Index>(i) * j2, 1, j2).transpose().array();
      out(0, static_cast<Eigen::Index>(i)) = ((score - bi) * wgt).sum() / mass;
    }
    return out;
  };

  BiLevelConfig cfg;
  cfg.max_iter = 500;
  cfg.tol = 1e-4;
  cfg.tol_omega = 2e-2;
  cfg.j1 = 16;
  cfg.j2 = 16;
  cfg.grid = GridKind::Gauss;
  cfg.batch = 16;
  cfg.outer = OuterUpdate::Score;
  cfg.lr_beta = 2e-2;
  cfg.beta_init = {0.0};

  auto generate = [p](std::size_t n, std::uint64_t seed) { return gen_sens(n, seed, p); };
  return ExampleBundle{"sensitivity", std::move(prob), std::move(eq), {2.0}, NetworkArch(p + 1, 1, 33, 23), cfg, 1000,
                       generate, {}};
}

double SensExact::operator()(double u) const {
  const Eigen::Array4Xd pr = joint_rows(Eigen::ArrayXd::Constant(1, u), s, beta);
  return (alpha.array() * pr.col(0)).sum();
}

SensExact sens_exact_solution(std::span<const double> x, double beta, double lambda, const QuadratureGrid& grid,
                              const WorkingDensity& eta) {
  const Eigen::ArrayXd u = grid.inner_points.row(0).transpose().array();
  const double s = alternating_sum(x);
  const double w = grid.inner_weight();
  const Eigen::ArrayXd e = eta_on(u, x, eta);
  const Cells cells = cell_integrals(u, e, w, s, beta);
  const Eigen::Array4Xd pr = joint_rows(u, s, beta);
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int q = 0; q < 4; ++q) m(r, q) = w * (pr.row(r) * e.transpose() * pr.row(q)).sum() / cells.g[r];
  const Eigen::Matrix4d lhs = lambda * Eigen::Matrix4d::Identity() + m;
  const Eigen::Vector4d alpha = lhs.fullPivLu().solve(cells.c.matrix());
  return SensExact{alpha, s, beta};
}

}  // namespace fredse
