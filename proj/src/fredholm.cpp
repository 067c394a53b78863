#include "fredse/fredholm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fredse/error.hpp"

namespace fredse {

ResidualMode ResidualMode::tikhonov(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "Tikhonov parameter must be finite and >= 0");
  return {ResidualKind::Tikhonov, lambda};
}

double combine_residual(const ResidualMode& mode, double integral, double forcing, double weighted_b) {
  if (mode.kind == ResidualKind::SecondKind) return integral - forcing - weighted_b;
  return integral - forcing + mode.lambda * weighted_b;
}

FredholmProblem::FredholmProblem(std::string name_, int q_, ResidualMode mode_, Domain s_domain_, Domain t_domain_)
    : name(std::move(name_)), q(q_), mode(mode_), s_domain(std::move(s_domain_)), t_domain(std::move(t_domain_)) {}

void FredholmProblem::validate() const {
  if (q < 1) throw ConfigError("q", "problem needs at least one output component");
  if (!kernel && !separable) throw ConfigError("kernel", "problem '" + name + "' has no kernel");
  if (separable && (separable->rank < 0 || (separable->rank > 0 && (!separable->left || !separable->right)))) {
    throw ConfigError("kernel", "separable kernel is incomplete");
  }
  if (!forcing) throw ConfigError("forcing", "problem '" + name + "' has no forcing function");
  if (batch && (!separable || !batch->forcing || (separable->rank > 0 && (!batch->left || !batch->right)))) {
    throw ConfigError("batch", "batched evaluators need a separable kernel and a forcing form");
  }
  if (s_domain.dimension() != t_domain.dimension()) {
    throw ConfigError("domain", "s and t must live in the same space");
  }
  if (mode.kind == ResidualKind::Tikhonov && !(mode.lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
  if ((pooling == Pooling::Averaged || !observation_dependent) && !b_covariates.empty()) {
    throw ConfigError("b_covariates", "single-equation problems take the point only");
  }
}

double FredholmProblem::eval_kernel(Point s, Point t, Obs o, Params beta, Aux aux) const {
  if (kernel) return kernel(s, t, o, beta, aux);
  const auto r = static_cast<std::size_t>(separable->rank);
  if (r == 0) return 0.0;
  std::vector<double> l(r), rt(r);
  separable->left(s, o, beta, aux, l);
  separable->right(t, o, beta, aux, rt);
  double k = 0.0;
  for (std::size_t i = 0; i < r; ++i) k += l[i] * rt[i];
  return k;
}

double FredholmProblem::eval_weight(Point t, Obs o, Params beta, Aux aux) const {
  return weight ? weight(t, o, beta, aux) : 1.0;
}

std::vector<double> FredholmProblem::eval_aux(Obs o, Params beta, const QuadratureGrid& grid) const {
  return aux ? aux(o, beta, grid) : std::vector<double>{};
}

Eigen::VectorXd b_input(const FredholmProblem& p, Point point, Obs o) {
  Eigen::VectorXd in(p.b_input_dim());
  for (int k = 0; k < p.point_dim(); ++k) in[k] = point[static_cast<std::size_t>(k)];
  for (std::size_t c = 0; c < p.b_covariates.size(); ++c) in[p.point_dim() + static_cast<Eigen::Index>(c)] = o[p.b_covariates[c]];
  return in;
}

namespace {

std::string describe(Point t, Obs o) {
  std::ostringstream s;
  s << "t=(";
  for (std::size_t k = 0; k < t.size(); ++k) s << (k ? "," : "") << t[k];
  s << "), O=(";
  for (std::size_t k = 0; k < o.size(); ++k) s << (k ? "," : "") << o[k];
  s << ")";
  return s.str();
}

Point col_span(const Eigen::MatrixXd& m, Eigen::Index c) {
  return Point(m.col(c).data(), static_cast<std::size_t>(m.rows()));
}

Eigen::MatrixXd inputs_with_covariates(const Eigen::MatrixXd& points, const Eigen::VectorXd& cov) {
  Eigen::MatrixXd in(points.rows() + cov.size(), points.cols());
  in.topRows(points.rows()) = points;
  if (cov.size() > 0) in.bottomRows(cov.size()) = cov.replicate(1, points.cols());
  return in;
}

Eigen::VectorXd covariates_of(const FredholmProblem& p, Obs o) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(p.b_covariates.size()));
  for (std::size_t k = 0; k < p.b_covariates.size(); ++k) c[static_cast<Eigen::Index>(k)] = o[p.b_covariates[k]];
  return c;
}

struct ResidualParts {
  Eigen::VectorXd integral;
  Eigen::VectorXd forcing;
  Eigen::VectorXd weighted_b;
};

ResidualParts residual_parts(const FredholmProblem& p, const SolutionFn& b, Point t, Obs o, Params beta,
                             const QuadratureGrid& grid) {
  p.validate();
  if (static_cast<int>(t.size()) != p.point_dim()) throw ShapeError("residual point has wrong dimension");
  if (b.input_dim() != p.b_input_dim() || b.output_dim() != p.q) {
    throw ShapeError("solution shape does not match problem '" + p.name + "'");
  }
  const auto aux = p.eval_aux(o, beta, grid);
  const Eigen::VectorXd cov = covariates_of(p, o);
  const Eigen::MatrixXd b_inner = b.evaluate(inputs_with_covariates(grid.inner_points, cov));
  ResidualParts parts{Eigen::VectorXd::Zero(p.q), Eigen::VectorXd::Zero(p.q), Eigen::VectorXd::Zero(p.q)};
  for (Eigen::Index j = 0; j < grid.j2(); ++j) {
    const double k = p.eval_kernel(col_span(grid.inner_points, j), t, o, beta, aux);
    if (!std::isfinite(k)) throw NumericError("kernel is not finite at " + describe(t, o));
    parts.integral += k * b_inner.col(j);
  }
  parts.integral = grid.inner_volume * (parts.integral / static_cast<double>(grid.j2()));
  p.forcing(t, o, beta, aux, std::span<double>(parts.forcing.data(), static_cast<std::size_t>(p.q)));
  if (!parts.forcing.allFinite()) throw NumericError("forcing is not finite at " + describe(t, o));
  const double w = p.eval_weight(t, o, beta, aux);
  if (!std::isfinite(w)) throw NumericError("b-term weight is not finite at " + describe(t, o));
  Eigen::VectorXd tin = b_input(p, t, o);
  parts.weighted_b = w * b(std::span<const double>(tin.data(), static_cast<std::size_t>(tin.size())));
  return parts;
}

}  // namespace

Eigen::VectorXd residual(const FredholmProblem& p, const SolutionFn& b, Point t, Obs o, Params beta,
                         const QuadratureGrid& grid) {
  const auto parts = residual_parts(p, b, t, o, beta, grid);
  Eigen::VectorXd r(p.q);
  for (int k = 0; k < p.q; ++k) r[k] = combine_residual(p.mode, parts.integral[k], parts.forcing[k], parts.weighted_b[k]);
  return r;
}

Eigen::VectorXd residual_unified(const FredholmProblem& p, const SolutionFn& b, Point t, Obs o, Params beta,
                                 const QuadratureGrid& grid) {
  const auto parts = residual_parts(p, b, t, o, beta, grid);
  const double alpha = p.mode.alpha();
  Eigen::VectorXd r(p.q);
  for (int k = 0; k < p.q; ++k) r[k] = combine_residual_unified(alpha, parts.integral[k], parts.forcing[k], parts.weighted_b[k]);
  return r;
}

Eigen::VectorXd pooled_residual(const FredholmProblem& p, const SolutionFn& b, Point t, const Dataset& data,
                                Params beta, const QuadratureGrid& grid) {
  if (data.empty()) throw ConfigError("data", "pooled residual needs at least one observation");
  Eigen::VectorXd r = Eigen::VectorXd::Zero(p.q);
  for (std::size_t i = 0; i < data.size(); ++i) r += residual(p, b, t, data.row(i), beta, grid);
  return r / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Discretization

Discretization::Discretization(const FredholmProblem& p, const Dataset& data, Params beta, const QuadratureGrid& grid)
    : q_(p.q),
      input_dim_(p.b_input_dim()),
      point_dim_(p.point_dim()),
      j1_(grid.j1()),
      j2_(grid.j2()),
      separable_(p.separable.has_value()),
      grid_(&grid) {
  p.validate();
  if (grid.outer_points.rows() != p.point_dim() || grid.inner_points.rows() != p.point_dim()) {
    throw ShapeError("grid dimension does not match problem '" + p.name + "'");
  }
  if (p.observation_dependent && data.empty()) throw ConfigError("data", "inner loss needs at least one observation");

  const std::size_t n_obs = p.observation_dependent ? data.size() : 1;
  const bool averaged = p.observation_dependent && p.pooling == Pooling::Averaged;
  if (!separable_ && !averaged) {
    const double entries = static_cast<double>(n_obs) * static_cast<double>(j1_) * static_cast<double>(j2_);
    if (entries > 2e8) throw ConfigError("kernel", "dense kernel too large to tabulate; supply a separable form");
  }
  const double inner_w = grid.inner_weight();
  const int rank = separable_ ? p.separable->rank : 0;
  std::vector<double> empty_obs;

  const bool batched = separable_ && p.batch.has_value();
  auto build = [&](Obs o) {
    Group g;
    const auto aux = p.eval_aux(o, beta, grid);
    const double alpha = p.mode.alpha();
    if (batched) {
      const BatchEval& be = *p.batch;
      if (rank > 0) {
        g.left = inner_w * be.left(grid.inner_points, o, beta, aux);
        g.right = be.right(grid.outer_points, o, beta, aux).transpose();
      } else {
        g.left.resize(0, j2_);
        g.right.resize(j1_, 0);
      }
      g.forcing = be.forcing(grid.outer_points, o, beta, aux);
      g.alpha_w = be.weight ? Eigen::RowVectorXd(alpha * be.weight(grid.outer_points, o, beta, aux))
                            : Eigen::RowVectorXd::Constant(j1_, alpha);
      if (g.left.rows() != rank || g.left.cols() != j2_ || g.right.rows() != j1_ || g.right.cols() != rank ||
          g.forcing.rows() != q_ || g.forcing.cols() != j1_ || g.alpha_w.size() != j1_) {
        throw ShapeError("batched evaluators of problem '" + p.name + "' returned the wrong shape");
      }
      if (!g.left.allFinite() || !g.right.allFinite()) throw NumericError("kernel factors are not finite for an observation");
      if (!g.forcing.allFinite() || !g.alpha_w.allFinite()) throw NumericError("forcing or weight is not finite for an observation");
      g.covariates = covariates_of(p, o);
      return g;
    }
    if (separable_) {
      g.left.resize(rank, j2_);
      g.right.resize(j1_, rank);
      std::vector<double> buf(static_cast<std::size_t>(rank));
      for (Eigen::Index j = 0; j < j2_; ++j) {
        if (rank == 0) break;
        p.separable->left(col_span(grid.inner_points, j), o, beta, aux, buf);
        for (int r = 0; r < rank; ++r) g.left(r, j) = inner_w * buf[static_cast<std::size_t>(r)];
      }
      for (Eigen::Index l = 0; l < j1_; ++l) {
        if (rank == 0) break;
        p.separable->right(col_span(grid.outer_points, l), o, beta, aux, buf);
        for (int r = 0; r < rank; ++r) g.right(l, r) = buf[static_cast<std::size_t>(r)];
      }
      if (!g.left.allFinite() || !g.right.allFinite()) throw NumericError("kernel factors are not finite for an observation");
    } else {
      g.kernel.resize(j1_, j2_);
      for (Eigen::Index l = 0; l < j1_; ++l)
        for (Eigen::Index j = 0; j < j2_; ++j)
          g.kernel(l, j) = inner_w * p.kernel(col_span(grid.inner_points, j), col_span(grid.outer_points, l), o, beta, aux);
      if (!g.kernel.allFinite()) throw NumericError("kernel is not finite for an observation");
    }
    g.forcing.resize(q_, j1_);
    g.alpha_w.resize(j1_);
    for (Eigen::Index l = 0; l < j1_; ++l) {
      p.forcing(col_span(grid.outer_points, l), o, beta, aux, std::span<double>(g.forcing.col(l).data(), static_cast<std::size_t>(q_)));
      g.alpha_w[l] = alpha * p.eval_weight(col_span(grid.outer_points, l), o, beta, aux);
    }
    if (!g.forcing.allFinite() || !g.alpha_w.allFinite()) throw NumericError("forcing or weight is not finite for an observation");
    g.covariates = covariates_of(p, o);
    return g;
  };

  if (!p.observation_dependent) {
    groups_.push_back(build(data.empty() ? Obs(empty_obs) : data.row(0)));
    return;
  }
  if (!averaged) {
    groups_.reserve(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i) groups_.push_back(build(data.row(i)));
    return;
  }
  // Averaged: fold all observations into one group.
  Group pooled;
  const double inv_n = 1.0 / static_cast<double>(n_obs);
  pooled.forcing = Eigen::MatrixXd::Zero(q_, j1_);
  pooled.alpha_w = Eigen::RowVectorXd::Zero(j1_);
  if (separable_) {
    pooled.left.resize(static_cast<Eigen::Index>(rank * n_obs), j2_);
    pooled.right.resize(j1_, static_cast<Eigen::Index>(rank * n_obs));
  } else {
    pooled.kernel = Eigen::MatrixXd::Zero(j1_, j2_);
  }
  for (std::size_t i = 0; i < n_obs; ++i) {
    Group g = build(data.row(i));
    if (separable_) {
      const auto off = static_cast<Eigen::Index>(i) * rank;
      pooled.left.middleRows(off, rank) = g.left;
      pooled.right.middleCols(off, rank) = inv_n * g.right;
    } else {
      pooled.kernel += inv_n * g.kernel;
    }
    pooled.forcing += inv_n * g.forcing;
    pooled.alpha_w += inv_n * g.alpha_w;
  }
  pooled.covariates = Eigen::VectorXd(0);
  groups_.push_back(std::move(pooled));
}

Eigen::MatrixXd Discretization::inner_inputs(std::size_t g) const {
  return inputs_with_covariates(grid_->inner_points, groups_[g].covariates);
}

Eigen::MatrixXd Discretization::outer_inputs(std::size_t g) const {
  return inputs_with_covariates(grid_->outer_points, groups_[g].covariates);
}

Eigen::MatrixXd Discretization::all_inner_inputs() const {
  Eigen::MatrixXd in(input_dim_, static_cast<Eigen::Index>(groups_.size()) * j2_);
  for (std::size_t g = 0; g < groups_.size(); ++g) in.middleCols(static_cast<Eigen::Index>(g) * j2_, j2_) = inner_inputs(g);
  return in;
}

Eigen::MatrixXd Discretization::all_outer_inputs() const {
  Eigen::MatrixXd in(input_dim_, static_cast<Eigen::Index>(groups_.size()) * j1_);
  for (std::size_t g = 0; g < groups_.size(); ++g) in.middleCols(static_cast<Eigen::Index>(g) * j1_, j1_) = outer_inputs(g);
  return in;
}

GridValues Discretization::evaluate(const SolutionFn& b) const {
  if (b.input_dim() != input_dim_ || b.output_dim() != q_) throw ShapeError("solution shape does not match the discretisation");
  return GridValues{b.evaluate(all_inner_inputs()), b.evaluate(all_outer_inputs())};
}

Eigen::MatrixXd Discretization::apply_operator(std::size_t g, const Eigen::MatrixXd& b_inner,
                                               const Eigen::MatrixXd& b_outer) const {
  const Group& G = groups_[g];
  Eigen::MatrixXd out;
  if (separable_) {
    if (G.left.rows() == 0) {
      out = Eigen::MatrixXd::Zero(b_inner.rows(), j1_);
    } else {
      const Eigen::MatrixXd moments = b_inner * G.left.transpose();  // m x R
      out.noalias() = moments * G.right.transpose();
    }
  } else {
    out.noalias() = b_inner * G.kernel.transpose();
  }
  out.array() -= b_outer.array().rowwise() * G.alpha_w.array();
  return out;
}

Eigen::MatrixXd Discretization::residuals(std::size_t g, const Eigen::MatrixXd& b_inner,
                                          const Eigen::MatrixXd& b_outer) const {
  return apply_operator(g, b_inner, b_outer) - groups_[g].forcing;
}

void Discretization::pullback(std::size_t g, const Eigen::MatrixXd& dr, Eigen::MatrixXd& d_inner,
                              Eigen::MatrixXd& d_outer) const {
  const Group& G = groups_[g];
  d_outer = -(dr.array().rowwise() * G.alpha_w.array()).matrix();
  if (separable_) {
    if (G.left.rows() == 0) {
      d_inner = Eigen::MatrixXd::Zero(dr.rows(), j2_);
    } else {
      const Eigen::MatrixXd tmp = dr * G.right;  // q x R
      d_inner.noalias() = tmp * G.left;
    }
  } else {
    d_inner.noalias() = dr * G.kernel;
  }
}

double Discretization::loss(const GridValues& v) const {
  double total = 0.0;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    const Eigen::MatrixXd r = residuals(g, v.inner.middleCols(gi * j2_, j2_), v.outer.middleCols(gi * j1_, j1_));
    total += r.squaredNorm() / static_cast<double>(j1_);
  }
  return total / static_cast<double>(groups_.size());
}

double loss_K(const FredholmProblem& p, const SolutionFn& b, const Dataset& data, Params beta,
              const QuadratureGrid& grid) {
  Discretization d(p, data, beta, grid);
  const double l = d.loss(b);
  if (!std::isfinite(l)) throw NumericError("inner loss is not finite");
  return l;
}

double loss_K_reference(const FredholmProblem& p, const SolutionFn& b, const Dataset& data, Params beta,
                        const QuadratureGrid& grid) {
  double total = 0.0;
  std::size_t groups = 0;
  const bool single = !p.observation_dependent;
  const bool averaged = p.observation_dependent && p.pooling == Pooling::Averaged;
  std::vector<double> empty_obs;
  for (Eigen::Index l = 0; l < grid.j1(); ++l) {
    const Point t = col_span(grid.outer_points, l);
    if (single) {
      total += residual(p, b, t, data.empty() ? Obs(empty_obs) : data.row(0), beta, grid).squaredNorm();
    } else if (averaged) {
      total += pooled_residual(p, b, t, data, beta, grid).squaredNorm();
    } else {
      for (std::size_t i = 0; i < data.size(); ++i) total += residual(p, b, t, data.row(i), beta, grid).squaredNorm();
    }
  }
  groups = (single || averaged) ? 1 : data.size();
  return total / static_cast<double>(grid.j1()) / static_cast<double>(groups);
}

// ---------------------------------------------------------------------------
// Polynomial collocation

PolynomialBasis default_polynomial_basis(const FredholmProblem& p, int degree) {
  if (p.b_covariates.empty()) return PolynomialBasis::total_degree(p.point_dim(), degree);
  // Many covariates make the total-degree basis explode; keep the point
  // polynomial and let covariates enter linearly.
  if (p.b_covariates.size() > 2) {
    return PolynomialBasis::point_poly_covariate_linear(p.point_dim(), static_cast<int>(p.b_covariates.size()), degree);
  }
  return PolynomialBasis::total_degree(p.b_input_dim(), degree);
}

PolynomialFit solve_polynomial(const Discretization& d, const PolynomialBasis& basis) {
  if (basis.input_dim() != d.input_dim()) throw ShapeError("basis input dimension does not match the problem");
  const auto nb = static_cast<Eigen::Index>(basis.size());
  const int q = d.q();
  const double rows = static_cast<double>(d.groups()) * static_cast<double>(d.j1());
  if (rows < static_cast<double>(nb)) {
    throw ConfigError("degree", "fewer collocation equations than polynomial coefficients");
  }
  // Streaming QR: keep an (nb x nb) triangular factor R and the rotated
  // right-hand side; each block of rows is appended and re-factorised.
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(0, nb);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(0, q);
  double discarded = 0.0;  // squared residual mass already rotated out
  const Eigen::Index block_target = std::max<Eigen::Index>(4 * nb, 4096);
  Eigen::MatrixXd A_block(0, nb);
  Eigen::MatrixXd c_block(0, q);
  std::vector<Eigen::MatrixXd> a_parts;
  std::vector<Eigen::MatrixXd> c_parts;
  Eigen::Index pending = 0;

  auto flush = [&]() {
    if (pending == 0) return;
    Eigen::MatrixXd A(R.rows() + pending, nb);
    Eigen::MatrixXd C(R.rows() + pending, q);
    A.topRows(R.rows()) = R;
    C.topRows(R.rows()) = rhs;
    Eigen::Index off = R.rows();
    for (std::size_t k = 0; k < a_parts.size(); ++k) {
      A.middleRows(off, a_parts[k].rows()) = a_parts[k];
      C.middleRows(off, c_parts[k].rows()) = c_parts[k];
      off += a_parts[k].rows();
    }
    a_parts.clear();
    c_parts.clear();
    pending = 0;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::MatrixXd QtC = qr.householderQ().transpose() * C;
    const Eigen::Index keep = std::min(nb, A.rows());
    R = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
    rhs = QtC.topRows(keep);
    if (QtC.rows() > keep) discarded += QtC.bottomRows(QtC.rows() - keep).squaredNorm();
  };

  for (std::size_t g = 0; g < d.groups(); ++g) {
    const Eigen::MatrixXd phi_inner = basis.evaluate(d.inner_inputs(g));  // nb x J2
    const Eigen::MatrixXd phi_outer = basis.evaluate(d.outer_inputs(g));  // nb x J1
    const Eigen::MatrixXd op = d.apply_operator(g, phi_inner, phi_outer);  // nb x J1
    // Rows are (node, component); the operator is shared across components,
    // so the design for component k is op^T and its target forcing_k.
    a_parts.push_back(op.transpose());
    c_parts.push_back(d.forcing(g).transpose());
    pending += d.j1();
    if (pending >= block_target) flush();
  }
  flush();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(R.rows(), R.cols());
  cod.setThreshold(1e-12);
  cod.compute(R);
  Eigen::MatrixXd coeffs = cod.solve(rhs);
  PolynomialFit fit{PolynomialCoefficients{basis, coeffs}, 0.0, cod.rank()};
  fit.coefficients.rank_deficient = cod.rank() < nb;
  const double remaining = (R * coeffs - rhs).squaredNorm();
  fit.loss = (discarded + remaining) / rows;
  return fit;
}

PolynomialCoefficients solve_polynomial(const FredholmProblem& p, const Dataset& data, Params beta,
                                        const QuadratureGrid& grid, int degree) {
  Discretization d(p, data, beta, grid);
  return solve_polynomial(d, default_polynomial_basis(p, degree)).coefficients;
}

// ---------------------------------------------------------------------------
// Neural solver

int default_batch(std::size_t n_observations) { return n_observations <= 1000 ? 0 : 256; }

NeuralInnerSolver::NeuralInnerSolver(NetworkWeights w, AdamState st, std::uint64_t batch_seed)
    : w_(std::move(w)), st_(std::move(st)), rng_(batch_seed) {}

double NeuralInnerSolver::train(const Discretization& d, int steps, double lr, int batch) {
  if (steps < 1) throw ConfigError("steps", "must be >= 1");
  if (w_.arch().input_dim() != d.input_dim() || w_.arch().output_dim() != d.q()) {
    throw ShapeError("network shape does not match the problem");
  }
  double last = 0.0;
  for (int s = 0; s < steps; ++s) {
    last = step(d, lr, batch);
    if (!std::isfinite(last)) throw NumericError("inner loss became non-finite at step " + std::to_string(s));
  }
  return last;
}

namespace {

// Partial Fisher-Yates: k distinct indices from [0, n), in draw order.
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index k, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double NeuralInnerSolver::step(const Discretization& d, double lr, int batch) {
  const Eigen::Index j1 = d.j1();
  const Eigen::Index j2 = d.j2();
  const int q = d.q();

  if (d.groups() == 1) {
    // Batch over outer nodes.
    const bool full = batch <= 0 || batch >= j1;
    std::vector<Eigen::Index> nodes;
    if (!full) nodes = sample_without_replacement(j1, batch, rng_);
    const Eigen::MatrixXd inner_in = d.inner_inputs(0);
    const Eigen::MatrixXd outer_all = d.outer_inputs(0);
    const Eigen::MatrixXd outer_in = full ? outer_all : Eigen::MatrixXd(outer_all(Eigen::all, nodes));
    const Eigen::Index n_out = outer_in.cols();
    Eigen::MatrixXd inputs(d.input_dim(), j2 + n_out);
    inputs << inner_in, outer_in;
    const ForwardCache cache = forward_cached(w_, inputs);
    const Eigen::MatrixXd b_inner = cache.output.leftCols(j2);
    Eigen::MatrixXd b_outer_full = Eigen::MatrixXd::Zero(q, j1);
    if (full) {
      b_outer_full = cache.output.rightCols(n_out);
    } else {
      for (Eigen::Index k = 0; k < n_out; ++k) b_outer_full.col(nodes[static_cast<std::size_t>(k)]) = cache.output.col(j2 + k);
    }
    Eigen::MatrixXd r = d.residuals(0, b_inner, b_outer_full);
    if (!full) {
      Eigen::MatrixXd masked = Eigen::MatrixXd::Zero(q, j1);
      for (auto l : nodes) masked.col(l) = r.col(l);
      r = std::move(masked);
    }
    const double scale = 1.0 / static_cast<double>(n_out);
    const double loss = r.squaredNorm() * scale;
    Eigen::MatrixXd d_inner, d_outer;
    d.pullback(0, 2.0 * scale * r, d_inner, d_outer);
    Eigen::MatrixXd upstream(q, j2 + n_out);
    upstream.leftCols(j2) = d_inner;
    if (full) {
      upstream.rightCols(n_out) = d_outer;
    } else {
      for (Eigen::Index k = 0; k < n_out; ++k) upstream.col(j2 + k) = d_outer.col(nodes[static_cast<std::size_t>(k)]);
    }
    const NetworkGradient g = backprop(w_, cache, inputs, upstream);
    adam_update(w_.flat(), g.flat(), st_, lr);
    return loss;
  }

  // Batch over groups (observations), all nodes of each.
  const auto G = static_cast<Eigen::Index>(d.groups());
  const bool full = batch <= 0 || batch >= G;
  std::vector<Eigen::Index> chosen;
  if (full) {
    chosen.resize(static_cast<std::size_t>(G));
    std::iota(chosen.begin(), chosen.end(), Eigen::Index{0});
  } else {
    chosen = sample_without_replacement(G, batch, rng_);
  }
  const auto B = static_cast<Eigen::Index>(chosen.size());
  const Eigen::Index per = j2 + j1;
  Eigen::MatrixXd inputs(d.input_dim(), B * per);
  for (Eigen::Index k = 0; k < B; ++k) {
    const auto g = static_cast<std::size_t>(chosen[static_cast<std::size_t>(k)]);
    inputs.middleCols(k * per, j2) = d.inner_inputs(g);
    inputs.middleCols(k * per + j2, j1) = d.outer_inputs(g);
  }
  const ForwardCache cache = forward_cached(w_, inputs);
  const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(j1));
  double loss = 0.0;
  Eigen::MatrixXd upstream(q, B * per);
  Eigen::MatrixXd d_inner, d_outer;
  for (Eigen::Index k = 0; k < B; ++k) {
    const auto g = static_cast<std::size_t>(chosen[static_cast<std::size_t>(k)]);
    const Eigen::MatrixXd r = d.residuals(g, cache.output.middleCols(k * per, j2), cache.output.middleCols(k * per + j2, j1));
    loss += r.squaredNorm() * scale;
    d.pullback(g, 2.0 * scale * r, d_inner, d_outer);
    upstream.middleCols(k * per, j2) = d_inner;
    upstream.middleCols(k * per + j2, j1) = d_outer;
  }
  const NetworkGradient grad = backprop(w_, cache, inputs, upstream);
  adam_update(w_.flat(), grad.flat(), st_, lr);
  return loss;
}

NeuralStepResult solve_neural_steps(const FredholmProblem& p, const Dataset& data, Params beta,
                                    const QuadratureGrid& grid, NetworkWeights w, AdamState st, int steps, double lr,
                                    int batch, std::uint64_t batch_seed) {
  Discretization d(p, data, beta, grid);
  NeuralInnerSolver solver(std::move(w), std::move(st), batch_seed);
  solver.train(d, steps, lr, batch);
  const double loss = d.loss(solver.solution());
  if (!std::isfinite(loss)) throw NumericError("inner loss is not finite after training");
  return NeuralStepResult{solver.weights(), solver.adam(), loss};
}

}  // namespace fredse
