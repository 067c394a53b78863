#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fredse/error.hpp"
#include "fredse/harness/config.hpp"
#include "fredse/harness/report.hpp"
#include "fredse/harness/run.hpp"

using namespace fredse;
namespace fs = std::filesystem;

namespace {

std::string rows_csv(const std::vector<SimulationRow>& rows) {
  std::ostringstream os;
  write_rows_csv(os, rows, rows.empty() ? 0 : static_cast<int>(rows.front().beta.size()));
  return os.str();
}

std::string config_error_key(const std::string& text) {
  try {
    load_config(text);
  } catch (const ConfigError& e) {
    return e.key_path();
  }
  return "<none>";
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fredse_harness_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallMnar =
    R"({"example":"mnar","n":60,"reps":3,"base_seed":5,"max_iter":4,"j1":40,"j2":40,)"
    R"("comparators":["poly:2","oracle"]})";

}  // namespace

TEST_CASE("config defaults come from the example bundle") {
  const RunConfig c = load_config(R"({"example":"mnar","n":500,"reps":5,"base_seed":1,"solver":{"kind":"neural"}})");
  CHECK(c.solver.kind == SolverSpec::Kind::Neural);
  CHECK(c.solver.width == 5);
  CHECK(c.solver.depth == 3);
  CHECK(c.bilevel.gamma == 10);
  CHECK(c.bilevel.j1 == 1000);
  CHECK(c.bilevel.j2 == 1000);
  CHECK(c.n == 500);
  CHECK(c.reps == 5);
  CHECK(c.base_seed == 1);
  CHECK_FALSE(c.lambda.has_value());

  const RunConfig s = load_config(R"({"example":"sensitivity"})");
  CHECK(s.lambda == 0.001);
  CHECK(s.solver.width == 33);
  CHECK(s.solver.depth == 23);
  CHECK(s.n == 1000);
}

TEST_CASE("config errors carry the key path") {
  CHECK(config_error_key(R"({"example":"mnar","reps":0})") == "reps");
  CHECK(config_error_key(R"({"example":"mnar","bogus":1})") == "bogus");
  CHECK(config_error_key(R"({"example":"mnar","solver":{"kind":"neural","size":3}})") == "solver.size");
  CHECK(config_error_key(R"({"example":"mnar","solver":{"kind":"polynomial"}})") == "solver.degree");
  CHECK(config_error_key(R"({"example":"mnar","solver":{"kind":"polynomial","degree":2,"width":4}})") == "solver.width");
  CHECK(config_error_key(R"({"example":"mnar","gamma":0})") == "gamma");
  CHECK(config_error_key(R"({"example":"mnar","lambda":0.1})") == "lambda");
  CHECK(config_error_key(R"({"example":"mnar","comparators":["zeta_star"]})") == "comparators.0");
  CHECK(config_error_key(R"({"example":"mnar","n":"big"})") == "n");
  CHECK(config_error_key(R"({"n":3})") == "example");
  CHECK(config_error_key(R"({"example":"mnar",)") == "");
  CHECK(config_error_key(R"({"example":"mars"})") == "example");
}

TEST_CASE("canonical serialization is a fixed point") {
  for (const char* text : {R"({"example":"toy"})", kSmallMnar,
                           R"({"example":"sensitivity","lambda":0.01,"solver":{"kind":"polynomial","degree":3}})",
                           R"({"example":"shift","tol_omega":null,"grid":"gauss","outer_update":"score"})"}) {
    CAPTURE(text);
    const std::string once = serialize_config(load_config(text));
    CHECK(serialize_config(load_config(once)) == once);
  }
  const std::string c = serialize_config(load_config(R"({"example":"toy"})"));
  CHECK(c.find("\"record_wall_time\": false") != std::string::npos);
}

TEST_CASE("simulate: one row per (rep, solver), deterministic under parallelism") {
  const RunConfig cfg = load_config(kSmallMnar);
  ::setenv("FREDSE_THREADS", "1", 1);
  const std::vector<SimulationRow> serial = simulate(cfg);
  ::setenv("FREDSE_THREADS", "3", 1);
  CHECK(thread_count() == 3);
  const std::vector<SimulationRow> parallel = simulate(cfg);
  ::unsetenv("FREDSE_THREADS");

  REQUIRE(serial.size() == 9);
  CHECK(rows_csv(serial) == rows_csv(parallel));
  const std::vector<std::string> labels{"neural", "poly:2", "oracle"};
  for (std::size_t k = 0; k < serial.size(); ++k) {
    const SimulationRow& r = serial[k];
    CHECK(r.rep == static_cast<int>(k / 3));
    CHECK(r.seed == 5 + k / 3);
    CHECK(r.solver == labels[k % 3]);
    for (std::size_t j = 0; j < 2; ++j) {
      if (!std::isnan(r.beta[j])) CHECK(r.bias[j] == r.beta[j] - std::vector<double>{0.25, -0.5}[j]);
    }
    CHECK(std::isnan(r.wall_ms));
  }
  CHECK(serial[2].converged);
  CHECK_FALSE(serial[2].iterations.has_value());
}

TEST_CASE("diverged replications become NA rows") {
  const RunConfig cfg = load_config(R"({"example":"toy","reps":2,"lr_beta":1e13,"comparators":["poly:1"]})");
  const std::vector<SimulationRow> rows = simulate(cfg);
  REQUIRE(rows.size() == 4);
  for (const SimulationRow& r : rows) {
    CHECK_FALSE(r.converged);
    CHECK(std::isnan(r.beta[0]));
  }
  const std::string csv = rows_csv(rows);
  CHECK(csv.find(",NA,NA,") != std::string::npos);
  std::istringstream in(csv);
  const Summary s = summarize_csv(in);
  CHECK(s.solvers[0].rows == 2);
  CHECK(s.solvers[0].convergence_rate == 0.0);
  CHECK(s.solvers[0].used[0] == 0);
  CHECK(std::isnan(s.solvers[0].mean_bias[0]));
}

TEST_CASE("report arithmetic") {
  const std::string head = "example,rep,seed,solver,beta_1,bias_1,iterations,converged,loss_psi,loss_K,wall_ms\n";
  std::istringstream three(head + "toy,0,0,nn,2,1,10,1,0,0,NA\n" + "toy,1,1,nn,3,2,20,1,0,0,NA\n" +
                           "toy,2,2,nn,4,3,30,0,0,0,NA\n" + "toy,3,3,nn,NA,NA,NA,0,NA,NA,NA\n");
  const Summary s = summarize_csv(three);
  REQUIRE(s.solvers.size() == 1);
  const SolverSummary& r = s.solvers[0];
  CHECK(r.rows == 4);
  CHECK(r.converged == 2);
  CHECK(r.convergence_rate == 0.5);
  CHECK(r.used[0] == 3);
  CHECK(r.mean_bias[0] == 2.0);
  CHECK(r.sd_bias[0] == 1.0);
  CHECK(r.mean_iterations == 20.0);
  CHECK(std::isnan(r.mean_wall_ms));

  std::istringstream same(head + "toy,0,0,nn,2.5,0.5,7,1,1e-3,2e-3,4\n" + "toy,1,1,nn,2.5,0.5,7,1,1e-3,2e-3,4\n");
  const Summary t = summarize_csv(same);
  CHECK(t.solvers[0].sd_bias[0] == 0.0);
  CHECK(t.solvers[0].mean_wall_ms == 4.0);

  std::istringstream missing("example,rep,seed,solver,beta_1,iterations,converged,loss_psi,loss_K,wall_ms\n");
  try {
    summarize_csv(missing);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.column() == "bias_1");
  }
  std::istringstream bad(head + "toy,0,0,nn,x,1,10,1,0,0,NA\n");
  CHECK_THROWS_AS(summarize_csv(bad), ParseError);

  const nlohmann::ordered_json j = summary_to_json(s);
  CHECK(j["solvers"][0]["mean_wall_ms"].is_null());
  CHECK(summary_text(s).find("nn") != std::string::npos);
}

TEST_CASE("report matches an independent pass over the simulation CSV") {
  const std::string csv = rows_csv(simulate(load_config(kSmallMnar)));
  std::istringstream in(csv);
  const Summary s = summarize_csv(in);

  // Spreadsheet-style: split lines, pick columns by header position, two-pass moments.
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  std::vector<std::string> header;
  for (std::stringstream ls(line); std::getline(ls, line, ',');) header.push_back(line);
  const auto col = [&](const std::string& n) { return std::find(header.begin(), header.end(), n) - header.begin(); };
  std::map<std::string, std::vector<double>> bias2;
  while (std::getline(lines, line)) {
    std::vector<std::string> f;
    for (std::stringstream ls(line); std::getline(ls, line, ',');) f.push_back(line);
    if (f[col("bias_2")] != "NA") bias2[f[col("solver")]].push_back(std::stod(f[col("bias_2")]));
  }
  for (const SolverSummary& r : s.solvers) {
    const std::vector<double>& v = bias2[r.solver];
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    CHECK(r.mean_bias[1] == doctest::Approx(m).epsilon(1e-12));
    CHECK(r.sd_bias[1] == doctest::Approx(std::sqrt(ss / (v.size() - 1))).epsilon(1e-12));
  }
}

TEST_CASE("trace: one row per iteration starting at beta_init") {
  const RunConfig cfg = load_config(R"({"example":"mnar","n":60,"max_iter":5,"j1":40,"j2":40,"beta_init":[0.1,-0.2]})");
  const std::vector<TraceRow> rows = trace(cfg);
  CHECK(static_cast<int>(rows.size()) == estimate(cfg).report.iterations);
  CHECK(rows.front().beta == std::vector<double>{0.1, -0.2});
  std::ostringstream os;
  write_trace_csv(os, rows);
  const std::string text = os.str();
  CHECK(text.rfind("iter,beta_1,beta_2,loss_psi,loss_K\n1,0.1,-0.2,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(rows.size()) + 1);
  CHECK_THROWS_AS(trace(load_config(R"({"example":"toy","reps":2})")), ConfigError);
}

TEST_CASE("estimate JSON") {
  const RunConfig cfg = load_config(R"({"example":"toy","base_seed":3})");
  const EstimateRun run = estimate(cfg, 2);
  CHECK(run.seed == 5);
  const nlohmann::ordered_json j = estimate_to_json(cfg, run);
  CHECK(j["beta_hat"].size() == 1);
  CHECK(j["bias"][0].get<double>() == run.report.beta_hat[0] - 1.0);
  CHECK_FALSE(j.contains("wall_ms"));
  CHECK(j["config"]["example"] == "toy");
}

TEST_CASE("solve on analytic problems") {
  const SolveResult p = solve_analytic("analytic:degenerate", "poly:3");
  CHECK(p.loss_K <= 1e-12);
  CHECK(p.sup_error <= 1e-8);
  SolveOptions opt;
  opt.steps = 200;
  const SolveResult n = solve_analytic("zero_kernel", "neural:4x1", opt);
  CHECK(n.solver == "neural:4x1");
  CHECK(n.steps == 200);
  CHECK_THROWS_AS(solve_analytic("analytic:nope", "poly:1"), ConfigError);
  CHECK_THROWS_AS(solve_analytic("analytic:degenerate", "spline"), ConfigError);
}

TEST_CASE("atomic writes leave either the old file or the new one") {
  const fs::path target = scratch("rows.csv");
  write_file_atomic(target.string(), "old\n");
  write_file_atomic(target.string(), "new\n");
  CHECK(slurp(target) == "new\n");
  for (const auto& entry : fs::directory_iterator(target.parent_path())) {
    CHECK(entry.path().filename().string().find(".tmp.") == std::string::npos);
  }
  CHECK_THROWS_AS(write_file_atomic((scratch("missing") / "x" / "rows.csv").string(), "x"), IoError);
}

#ifdef FREDSE_CLI
TEST_CASE("command line exit codes and byte-identical reruns") {
  const std::string cli = FREDSE_CLI;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const fs::path good = scratch("good.json"), bad = scratch("bad.json"), broken = scratch("broken.json");
  std::ofstream(good) << R"({"example":"toy","reps":2,"comparators":["poly:1"]})";
  std::ofstream(bad) << R"({"example":"toy","reps":0})";
  std::ofstream(broken) << R"({"example":)";
  const fs::path a = scratch("a.csv"), b = scratch("b.csv");
  CHECK(run("simulate --config " + good.string() + " --out " + a.string()) == 0);
  CHECK(run("simulate --config " + good.string() + " --out " + b.string()) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(run("report " + a.string()) == 0);
  CHECK(run("simulate --config " + bad.string()) == 2);
  CHECK(run("estimate --config " + broken.string()) == 2);
  CHECK(run("estimate --config " + scratch("absent.json").string()) == 4);
  CHECK(run("report " + scratch("absent.csv").string()) == 4);
  CHECK(run("simulate --config " + good.string() + " --out /nonexistent/dir/x.csv") == 4);
  CHECK(run("frobnicate") == 2);
  const fs::path diverge = scratch("diverge.json");
  std::ofstream(diverge) << R"({"example":"toy","lr_beta":1e13})";
  CHECK(run("estimate --config " + diverge.string()) == 3);
  CHECK(run("simulate --config " + diverge.string() + " --out " + a.string()) == 0);
  CHECK(run("solve --problem analytic:degenerate --solver poly:3") == 0);
}
#endif
