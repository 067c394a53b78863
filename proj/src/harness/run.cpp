#include "fredse/harness/run.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "fredse/error.hpp"
#include "fredse/examples/analytic.hpp"
#include "fredse/util/format.hpp"

namespace fredse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

NetworkArch arch_for(const ExampleBundle& b, const SolverSpec& s) {
  const NetworkArch& a = b.arch;
  return NetworkArch(a.input_dim(), a.output_dim(), s.width, s.depth, a.activation());
}

EstimateReport run_solver(const ExampleBundle& b, const SolverSpec& s, const Dataset& data,
                          const BiLevelConfig& cfg) {
  if (s.kind == SolverSpec::Kind::Polynomial) return solve_bilevel_polynomial(b.problem, b.psi, data, s.degree, cfg);
  return solve_bilevel(b.problem, b.psi, data, arch_for(b, s), cfg);
}

SimulationRow na_row(const RunConfig& cfg, int rep, std::uint64_t seed, const std::string& label, int q) {
  SimulationRow r;
  r.example = cfg.example;
  r.rep = rep;
  r.seed = seed;
  r.solver = label;
  r.beta.assign(static_cast<std::size_t>(q), kNaN);
  r.bias.assign(static_cast<std::size_t>(q), kNaN);
  r.converged = false;
  r.loss_psi = kNaN;
  r.loss_K = kNaN;
  r.wall_ms = kNaN;
  return r;
}

void set_estimate(SimulationRow& r, const std::vector<double>& beta, const std::vector<double>& beta_star) {
  r.beta = beta;
  r.bias.resize(beta.size());
  for (std::size_t k = 0; k < beta.size(); ++k) r.bias[k] = beta[k] - beta_star[k];
}

std::vector<SimulationRow> run_replication(const RunConfig& cfg, const ExampleBundle& b, int rep) {
  const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(rep);
  const SimulatedData sim = b.generate(cfg.n, seed);
  BiLevelConfig bc = cfg.bilevel;
  bc.seed = seed;

  std::vector<SimulationRow> rows;
  for (const std::string& label : solver_labels(cfg)) {
    SimulationRow row = na_row(cfg, rep, seed, label, b.psi.q);
    if (auto it = b.comparators.find(label); it != b.comparators.end()) {
      try {
        set_estimate(row, it->second(sim), b.beta_star);
        row.converged = true;
      } catch (const NumericError&) {
      }
      rows.push_back(std::move(row));
      continue;
    }
    const SolverSpec spec = label == cfg.solver.label() ? cfg.solver : SolverSpec::parse(label);
    SolverSpec resolved = spec;
    if (resolved.kind == SolverSpec::Kind::Neural && resolved.width == 0) {
      resolved.width = b.arch.width();
      resolved.depth = b.arch.depth();
    }
    try {
      const EstimateReport rep_out = run_solver(b, resolved, sim.observed, bc);
      set_estimate(row, rep_out.beta_hat, b.beta_star);
      row.iterations = rep_out.iterations;
      row.converged = rep_out.converged;
      row.loss_psi = rep_out.final_loss_psi;
      row.loss_K = rep_out.final_loss_K;
      row.wall_ms = cfg.record_wall_time ? rep_out.wall_ms : kNaN;
    } catch (const DivergenceError& e) {
      row.iterations = static_cast<int>(e.trace().size());
    } catch (const NumericError&) {
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

int thread_count() {
  if (const char* env = std::getenv("FREDSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<std::string> solver_labels(const RunConfig& cfg) {
  std::vector<std::string> labels{cfg.solver.label()};
  labels.insert(labels.end(), cfg.comparators.begin(), cfg.comparators.end());
  return labels;
}

std::vector<SimulationRow> simulate(const RunConfig& cfg) {
  const ExampleBundle b = bundle_for(cfg);
  const auto reps = static_cast<std::size_t>(cfg.reps);
  std::vector<std::vector<SimulationRow>> per_rep(reps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    for (std::size_t r = next++; r < reps; r = next++) {
      try {
        per_rep[r] = run_replication(cfg, b, static_cast<int>(r));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = reps;
      }
    }
  };
  const int workers = std::min<int>(thread_count(), cfg.reps);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SimulationRow> rows;
  for (auto& chunk : per_rep) {
    for (auto& row : chunk) rows.push_back(std::move(row));
  }
  return rows;
}

void write_rows_csv(std::ostream& os, const std::vector<SimulationRow>& rows, int q) {
  os << "example,rep,seed,solver";
  for (int k = 1; k <= q; ++k) os << ",beta_" << k;
  for (int k = 1; k <= q; ++k) os << ",bias_" << k;
  os << ",iterations,converged,loss_psi,loss_K,wall_ms\n";
  for (const SimulationRow& r : rows) {
    os << r.example << ',' << r.rep << ',' << r.seed << ',' << r.solver;
    for (double v : r.beta) os << ',' << format_double(v);
    for (double v : r.bias) os << ',' << format_double(v);
    os << ',' << (r.iterations ? std::to_string(*r.iterations) : std::string("NA")) << ','
       << (r.converged ? 1 : 0) << ',' << format_double(r.loss_psi) << ',' << format_double(r.loss_K) << ','
       << format_double(r.wall_ms) << '\n';
  }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

EstimateRun estimate(const RunConfig& cfg, int rep) {
  const ExampleBundle b = bundle_for(cfg);
  EstimateRun run;
  run.seed = cfg.base_seed + static_cast<std::uint64_t>(rep);
  run.beta_star = b.beta_star;
  const SimulatedData sim = b.generate(cfg.n, run.seed);
  BiLevelConfig bc = cfg.bilevel;
  bc.seed = run.seed;
  run.report = run_solver(b, cfg.solver, sim.observed, bc);
  return run;
}

nlohmann::ordered_json estimate_to_json(const RunConfig& cfg, const EstimateRun& run) {
  const EstimateReport& r = run.report;
  nlohmann::ordered_json j;
  j["example"] = cfg.example;
  j["solver"] = cfg.solver.label();
  j["seed"] = run.seed;
  j["beta_hat"] = r.beta_hat;
  j["beta_star"] = run.beta_star;
  std::vector<double> bias(r.beta_hat.size());
  for (std::size_t k = 0; k < bias.size(); ++k) bias[k] = r.beta_hat[k] - run.beta_star[k];
  j["bias"] = bias;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["final_loss_psi"] = r.final_loss_psi;
  j["final_loss_K"] = r.final_loss_K;
  j["beta_step"] = r.beta_step;
  j["omega_step"] = r.omega_step;
  if (cfg.record_wall_time) j["wall_ms"] = r.wall_ms;
  j["config"] = config_to_json(cfg);
  return j;
}

std::vector<TraceRow> trace(const RunConfig& cfg) {
  if (cfg.reps != 1) throw ConfigError("reps", "trace needs reps = 1, got " + std::to_string(cfg.reps));
  return estimate(cfg).report.trace;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  const std::size_t q = rows.empty() ? 0 : rows.front().beta.size();
  os << "iter";
  for (std::size_t k = 1; k <= q; ++k) os << ",beta_" << k;
  os << ",loss_psi,loss_K\n";
  for (std::size_t m = 0; m < rows.size(); ++m) {
    os << m + 1;
    for (double v : rows[m].beta) os << ',' << format_double(v);
    os << ',' << format_double(rows[m].loss_psi) << ',' << format_double(rows[m].loss_K) << '\n';
  }
}

SolveResult solve_analytic(const std::string& problem, const std::string& solver, const SolveOptions& opt) {
  const std::string id = problem.rfind("analytic:", 0) == 0 ? problem.substr(9) : problem;
  const AnalyticProblem ap = analytic_problem(id);
  const FredholmProblem& p = ap.problem;
  const Dataset data = placeholder_data();
  const std::vector<double> beta;
  const QuadratureGrid grid = gauss_grid(p.t_domain, p.s_domain, opt.nodes, opt.nodes);

  SolverSpec spec = SolverSpec::parse(solver);
  SolveResult out;
  out.problem = "analytic:" + id;
  std::unique_ptr<SolutionFn> b;
  if (spec.kind == SolverSpec::Kind::Polynomial) {
    b = std::make_unique<PolynomialSolution>(solve_polynomial(p, data, beta, grid, spec.degree));
    out.solver = spec.label();
  } else {
    if (spec.width == 0) {
      spec.width = opt.width;
      spec.depth = opt.depth;
    }
    if (opt.steps < 1) throw ConfigError("steps", "must be >= 1");
    const NetworkArch arch(p.b_input_dim(), p.q, spec.width, spec.depth);
    NetworkWeights w = init_weights(arch, opt.seed);
    AdamState st(static_cast<Eigen::Index>(arch.parameter_count()));
    NeuralStepResult res = solve_neural_steps(p, data, beta, grid, std::move(w), std::move(st), opt.steps, opt.lr, 0);
    b = std::make_unique<NeuralSolution>(std::move(res.weights));
    out.solver = "neural:" + std::to_string(spec.width) + "x" + std::to_string(spec.depth);
    out.steps = opt.steps;
  }
  out.loss_K = loss_K(p, *b, data, beta, grid);

  constexpr int kPoints = 1001;
  Eigen::MatrixXd pts(1, kPoints);
  for (int i = 0; i < kPoints; ++i) pts(0, i) = static_cast<double>(i) / (kPoints - 1);
  out.sup_error = (b->evaluate(pts) - ap.exact->evaluate(pts)).cwiseAbs().maxCoeff();
  return out;
}

nlohmann::ordered_json solve_to_json(const SolveResult& r) {
  nlohmann::ordered_json j;
  j["problem"] = r.problem;
  j["solver"] = r.solver;
  j["loss_K"] = r.loss_K;
  j["sup_error"] = r.sup_error;
  if (r.steps) j["steps"] = *r.steps;
  return j;
}

}  // namespace fredse
