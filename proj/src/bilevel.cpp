#include "fredse/bilevel.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace fredse {

Eigen::MatrixXd psi_inner_inputs(const EstimatingEquation& eq, const Dataset& data, const QuadratureGrid& grid) {
  const Eigen::MatrixXd& s = grid.inner_points;
  switch (eq.inner) {
    case InnerValues::None:
      return Eigen::MatrixXd(0, 0);
    case InnerValues::Shared:
      return s;
    case InnerValues::PerObservation: {
      const auto pd = s.rows();
      const auto nc = static_cast<Eigen::Index>(eq.inner_covariates.size());
      const auto j2 = s.cols();
      Eigen::MatrixXd in(pd + nc, static_cast<Eigen::Index>(data.size()) * j2);
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto block = in.middleCols(static_cast<Eigen::Index>(i) * j2, j2);
        block.topRows(pd) = s;
        const Obs o = data.row(i);
        for (Eigen::Index c = 0; c < nc; ++c) block.row(pd + c).setConstant(o[eq.inner_covariates[static_cast<std::size_t>(c)]]);
      }
      return in;
    }
  }
  return Eigen::MatrixXd(0, 0);
}

PsiEvaluator::PsiEvaluator(const EstimatingEquation& eq, const Dataset& data, const QuadratureGrid& grid,
                           const SolutionFn* b)
    : eq_(&eq), data_(&data), grid_(&grid) {
  if (data.empty()) throw ConfigError("data", "estimating equation needs at least one observation");
  const bool needs_b = eq.probe_points || eq.inner != InnerValues::None;
  if (needs_b && b == nullptr) throw ConfigError("solution", "estimating equation '" + eq.name + "' reads b");
  if (eq.probe_points) probe_ = b->evaluate(eq.probe_points(data, grid));
  if (eq.inner != InnerValues::None) inner_ = b->evaluate(psi_inner_inputs(eq, data, grid));
}

PsiEvaluator::PsiEvaluator(const EstimatingEquation& eq, const Dataset& data, const QuadratureGrid& grid,
                           Eigen::MatrixXd probe, Eigen::MatrixXd inner)
    : eq_(&eq), data_(&data), grid_(&grid), probe_(std::move(probe)), inner_(std::move(inner)) {
  if (data.empty()) throw ConfigError("data", "estimating equation needs at least one observation");
}

Eigen::MatrixXd PsiEvaluator::values(Params beta) const {
  Eigen::MatrixXd v = eq_->psi(*data_, *grid_, beta, PsiInputs{probe_, inner_});
  if (v.rows() != eq_->q || v.cols() != static_cast<Eigen::Index>(data_->size())) {
    throw ShapeError("estimating equation '" + eq_->name + "' returned the wrong shape");
  }
  for (Eigen::Index i = 0; i < v.cols(); ++i) {
    if (!v.col(i).allFinite()) throw NumericError("psi is not finite at observation " + std::to_string(i));
  }
  return v;
}

Eigen::VectorXd PsiEvaluator::mean(Params beta) const { return values(beta).rowwise().mean(); }

double PsiEvaluator::loss(Params beta) const { return mean(beta).squaredNorm(); }

Eigen::VectorXd PsiEvaluator::gradient(Params beta, double h) const {
  if (!(h > 0.0)) throw ConfigError("fd_step", "must be > 0");
  std::vector<double> probe(beta.begin(), beta.end());
  Eigen::VectorXd g(static_cast<Eigen::Index>(beta.size()));
  for (std::size_t k = 0; k < beta.size(); ++k) {
    probe[k] = beta[k] + h;
    const double up = loss(probe);
    probe[k] = beta[k] - h;
    const double down = loss(probe);
    probe[k] = beta[k];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("outer loss is not finite at a gradient probe of coordinate " + std::to_string(k));
    }
    g[static_cast<Eigen::Index>(k)] = (up - down) / (2.0 * h);
  }
  return g;
}

double loss_psi(const EstimatingEquation& eq, Params beta, const SolutionFn* b, const Dataset& data,
                const QuadratureGrid& grid) {
  return PsiEvaluator(eq, data, grid, b).loss(beta);
}

Eigen::VectorXd grad_beta(const EstimatingEquation& eq, Params beta, const SolutionFn* b, const Dataset& data,
                          const QuadratureGrid& grid, double fd_step) {
  return PsiEvaluator(eq, data, grid, b).gradient(beta, fd_step);
}

void BiLevelConfig::validate(int q) const {
  if (gamma < 1) throw ConfigError("gamma", "must be >= 1");
  if (max_iter < 1) throw ConfigError("max_iter", "must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol", "must be > 0");
  if (tol_omega && !(*tol_omega > 0.0)) throw ConfigError("tol_omega", "must be > 0");
  if (j1 < 1) throw ConfigError("j1", "must be >= 1");
  if (j2 < 1) throw ConfigError("j2", "must be >= 1");
  if (!(lr_beta > 0.0)) throw ConfigError("lr_beta", "must be > 0");
  if (!(lr_omega > 0.0)) throw ConfigError("lr_omega", "must be > 0");
  if (!(fd_step > 0.0)) throw ConfigError("fd_step", "must be > 0");
  if (batch < -1) throw ConfigError("batch", "must be -1 (default), 0 (full) or positive");
  if (static_cast<int>(beta_init.size()) != q) {
    throw ConfigError("beta_init", "expected " + std::to_string(q) + " components");
  }
  for (double b : beta_init) {
    if (!std::isfinite(b)) throw ConfigError("beta_init", "must be finite");
  }
}

std::unique_ptr<SolutionFn> EstimateReport::solution() const {
  if (weights) return std::make_unique<NeuralSolution>(*weights);
  if (coefficients) return std::make_unique<PolynomialSolution>(*coefficients);
  return nullptr;
}

RunSeeds run_seeds(std::uint64_t seed) {
  return RunSeeds{derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3)};
}

QuadratureGrid make_grid(const FredholmProblem& p, const BiLevelConfig& cfg) {
  if (cfg.grid == GridKind::Gauss) return gauss_grid(p.t_domain, p.s_domain, cfg.j1, cfg.j2);
  return sample_grid(p.t_domain, p.s_domain, cfg.j1, cfg.j2, run_seeds(cfg.seed).grid);
}

namespace {

using Clock = std::chrono::steady_clock;

/*
 * The inner phase of one iteration: a network trained by Adam, or an exact
 * polynomial least-squares fit.
 */
class InnerBackend {
 public:
  virtual ~InnerBackend() = default;
  /// Called once with the discretisation at beta_init.
  virtual void prepare(const Discretization& d) = 0;
  virtual void advance(const Discretization& d) = 0;
  virtual const SolutionFn& current() const = 0;
  virtual Eigen::VectorXd params() const = 0;
  virtual void finish(EstimateReport& r) const = 0;
};

class NeuralBackend final : public InnerBackend {
 public:
  NeuralBackend(const NetworkArch& arch, const BiLevelConfig& cfg, int batch)
      : solver_(init_weights(arch, run_seeds(cfg.seed).weights),
                AdamState(static_cast<Eigen::Index>(arch.parameter_count())), run_seeds(cfg.seed).batches),
        sol_(solver_.weights()),
        gamma_(cfg.gamma),
        lr_(cfg.lr_omega),
        batch_(batch) {}

  void prepare(const Discretization&) override {}
  void advance(const Discretization& d) override {
    solver_.train(d, gamma_, lr_, batch_);
    sol_ = solver_.solution();
  }
  const SolutionFn& current() const override { return sol_; }
  Eigen::VectorXd params() const override { return solver_.weights().flat(); }
  void finish(EstimateReport& r) const override { r.weights = solver_.weights(); }

 private:
  NeuralInnerSolver solver_;
  NeuralSolution sol_;
  int gamma_;
  double lr_;
  int batch_;
};

class PolynomialBackend final : public InnerBackend {
 public:
  PolynomialBackend(const FredholmProblem& p, int degree) : basis_(default_polynomial_basis(p, degree)) {}

  void prepare(const Discretization& d) override { advance(d); }
  void advance(const Discretization& d) override {
    PolynomialFit fit = solve_polynomial(d, basis_);
    sol_.emplace(std::move(fit.coefficients));
  }
  const SolutionFn& current() const override { return *sol_; }
  Eigen::VectorXd params() const override {
    const auto& c = sol_->coefficients().coeffs;
    return Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
  }
  void finish(EstimateReport& r) const override { r.coefficients = sol_->coefficients(); }

 private:
  PolynomialBasis basis_;
  std::optional<PolynomialSolution> sol_;
};

// psi can reuse the node values of the inner loss when both read b at the
// same inputs in the same order.
bool shares_inner_values(const FredholmProblem& p, const EstimatingEquation& eq, const Discretization& d) {
  if (eq.inner == InnerValues::Shared) return d.groups() == 1 && p.b_covariates.empty();
  if (eq.inner == InnerValues::PerObservation) {
    return p.observation_dependent && p.pooling == Pooling::PerObservation && p.b_covariates == eq.inner_covariates;
  }
  return false;
}

class Run {
 public:
  Run(const FredholmProblem& p, const EstimatingEquation& eq, const Dataset& data, const BiLevelConfig& cfg,
      const RunHooks& hooks, InnerBackend& inner, const QuadratureGrid& grid)
      : p_(p), eq_(eq), data_(data), cfg_(cfg), hooks_(hooks), inner_(inner), grid_(grid),
        beta_(cfg.beta_init.begin(), cfg.beta_init.end()) {}

  EstimateReport run() {
    const auto start = Clock::now();
    EstimateReport r;
    try {
      if (p_.beta_dependent || !cfg_.allow_decoupled) {
        coupled(r);
      } else {
        decoupled(r);
      }
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergenceError(e.what(), std::move(trace_));
    }
    r.beta_hat = beta_;
    r.trace = std::move(trace_);
    inner_.finish(r);
    r.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    return r;
  }

 private:
  struct Snapshot {
    double loss_psi;
    double loss_K;
    std::optional<PsiEvaluator> psi;
  };

  // Losses at the current (beta, b) on discretisation d (built at the current beta).
  Snapshot snapshot(const Discretization& d) {
    const SolutionFn& b = inner_.current();
    const GridValues vals = d.evaluate(b);
    const double lk = d.loss(vals);
    Snapshot s{0.0, lk, std::nullopt};
    if (shares_inner_values(p_, eq_, d)) {
      Eigen::MatrixXd probe = eq_.probe_points ? b.evaluate(eq_.probe_points(data_, grid_)) : Eigen::MatrixXd();
      s.psi.emplace(eq_, data_, grid_, std::move(probe), vals.inner);
    } else {
      s.psi.emplace(eq_, data_, grid_, &b);
    }
    s.loss_psi = s.psi->loss(beta_);
    return s;
  }

  void guard(double lpsi, double lk, int iteration) {
    const double lim = cfg_.divergence_threshold;
    bool bad = !(std::isfinite(lpsi) && std::isfinite(lk)) || lpsi > lim || lk > lim;
    for (double b : beta_) bad = bad || !std::isfinite(b);
    if (bad) {
      std::ostringstream msg;
      msg << "diverged at iteration " << iteration << " (L_psi=" << lpsi << ", L_K=" << lk << ")";
      throw DivergenceError(msg.str(), std::move(trace_));
    }
  }

  void notify(Phase phase, int iteration, const Eigen::VectorXd& omega) {
    if (hooks_.on_step) hooks_.on_step(StepProbe{phase, iteration, &beta_, &omega});
  }

  double beta_step(const PsiEvaluator& psi, AdamState& st) {
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(beta_.data(), static_cast<Eigen::Index>(beta_.size()));
    const Eigen::VectorXd before = b;
    const Eigen::VectorXd g =
        cfg_.outer == OuterUpdate::Score ? Eigen::VectorXd(-psi.mean(beta_)) : psi.gradient(beta_, cfg_.fd_step);
    adam_update(b, g, st, cfg_.lr_beta);
    for (Eigen::Index k = 0; k < b.size(); ++k) beta_[static_cast<std::size_t>(k)] = b[k];
    return (b - before).norm();
  }

  void coupled(EstimateReport& r) {
    AdamState st(static_cast<Eigen::Index>(beta_.size()));
    auto d = std::make_unique<Discretization>(p_, data_, beta_, grid_);
    inner_.prepare(*d);
    for (int m = 1; m <= cfg_.max_iter; ++m) {
      Snapshot s = snapshot(*d);
      trace_.push_back(TraceRow{beta_, s.loss_psi, s.loss_K});
      guard(s.loss_psi, s.loss_K, m);

      const Eigen::VectorXd omega_before = inner_.params();
      notify(Phase::BeforeBeta, m, omega_before);
      const double db = beta_step(*s.psi, st);
      notify(Phase::AfterBeta, m, inner_.params());

      // Only rebuild when beta moved; for beta-free equations it never matters.
      if (p_.beta_dependent) d = std::make_unique<Discretization>(p_, data_, beta_, grid_);
      notify(Phase::BeforeOmega, m, omega_before);
      inner_.advance(*d);
      const Eigen::VectorXd omega_after = inner_.params();
      notify(Phase::AfterOmega, m, omega_after);
      const double dw = (omega_after - omega_before).norm();

      r.iterations = m;
      r.beta_step = db;
      r.omega_step = dw;
      if (db < cfg_.tol && dw < cfg_.omega_tolerance()) {
        r.converged = true;
        break;
      }
    }
    const Snapshot fin = snapshot(*d);
    r.final_loss_psi = fin.loss_psi;
    r.final_loss_K = fin.loss_K;
    guard(fin.loss_psi, fin.loss_K, r.iterations);
  }

  void decoupled(EstimateReport& r) {
    const Discretization d(p_, data_, beta_, grid_);
    inner_.prepare(d);
    bool omega_done = false;
    for (int k = 1; k <= cfg_.max_iter && !omega_done; ++k) {
      const Eigen::VectorXd before = inner_.params();
      inner_.advance(d);
      r.omega_step = (inner_.params() - before).norm();
      omega_done = r.omega_step < cfg_.omega_tolerance();
    }
    Snapshot s = snapshot(d);
    AdamState st(static_cast<Eigen::Index>(beta_.size()));
    bool beta_done = false;
    const Eigen::VectorXd omega = inner_.params();
    for (int m = 1; m <= cfg_.max_iter; ++m) {
      s.loss_psi = s.psi->loss(beta_);
      trace_.push_back(TraceRow{beta_, s.loss_psi, s.loss_K});
      guard(s.loss_psi, s.loss_K, m);
      notify(Phase::BeforeBeta, m, omega);
      r.beta_step = beta_step(*s.psi, st);
      notify(Phase::AfterBeta, m, omega);
      r.iterations = m;
      if (r.beta_step < cfg_.tol) {
        beta_done = true;
        break;
      }
    }
    r.converged = omega_done && beta_done;
    r.final_loss_psi = s.psi->loss(beta_);
    r.final_loss_K = s.loss_K;
    guard(r.final_loss_psi, r.final_loss_K, r.iterations);
  }

  const FredholmProblem& p_;
  const EstimatingEquation& eq_;
  const Dataset& data_;
  const BiLevelConfig& cfg_;
  const RunHooks& hooks_;
  InnerBackend& inner_;
  const QuadratureGrid& grid_;
  std::vector<double> beta_;
  std::vector<TraceRow> trace_;
};

void check_inputs(const FredholmProblem& p, const EstimatingEquation& eq, const Dataset& data,
                  const BiLevelConfig& cfg) {
  p.validate();
  if (!eq.psi) throw ConfigError("psi", "estimating equation has no psi");
  cfg.validate(eq.q);
  if (data.empty()) throw ConfigError("data", "needs at least one observation");
}

int resolve_batch(const BiLevelConfig& cfg, const Dataset& data) {
  return cfg.batch < 0 ? default_batch(data.size()) : cfg.batch;
}

}  // namespace

EstimateReport solve_bilevel(const FredholmProblem& p, const EstimatingEquation& eq, const Dataset& data,
                             const NetworkArch& arch, const BiLevelConfig& cfg, const RunHooks& hooks) {
  check_inputs(p, eq, data, cfg);
  if (arch.input_dim() != p.b_input_dim() || arch.output_dim() != p.q) {
    throw ConfigError("solver", "network shape does not match problem '" + p.name + "'");
  }
  const QuadratureGrid grid = make_grid(p, cfg);
  NeuralBackend inner(arch, cfg, resolve_batch(cfg, data));
  return Run(p, eq, data, cfg, hooks, inner, grid).run();
}

EstimateReport solve_bilevel_polynomial(const FredholmProblem& p, const EstimatingEquation& eq,
                                        const Dataset& data, int degree, const BiLevelConfig& cfg,
                                        const RunHooks& hooks) {
  check_inputs(p, eq, data, cfg);
  if (degree < 0) throw ConfigError("degree", "must be >= 0");
  const QuadratureGrid grid = make_grid(p, cfg);
  PolynomialBackend inner(p, degree);
  return Run(p, eq, data, cfg, hooks, inner, grid).run();
}

}  // namespace fredse
