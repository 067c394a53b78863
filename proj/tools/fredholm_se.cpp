#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fredse/error.hpp"
#include "fredse/harness/config.hpp"
#include "fredse/harness/report.hpp"
#include "fredse/harness/run.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    fredse::write_file_atomic(path, text);
  }
}

std::string output_path(const std::string& flag, const fredse::RunConfig& cfg) {
  return flag.empty() ? cfg.output : flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric estimation with neural Fredholm solvers"};
  app.require_subcommand(1);

  std::string config_path, out_path, report_path, json_path, problem, solver = "neural";
  int rep = 0;
  bool as_json = false;
  fredse::SolveOptions solve_opt;

  auto* estimate = app.add_subcommand("estimate", "Run one estimation and write a JSON report");
  estimate->add_option("--config", config_path, "Run configuration (JSON)")->required();
  estimate->add_option("--out", out_path, "Report path (stdout when omitted)");
  estimate->add_option("--rep", rep, "Replication index; the data seed is base_seed + rep")->check(CLI::NonNegativeNumber);

  auto* simulate = app.add_subcommand("simulate", "Run all replications and write the rows CSV");
  simulate->add_option("--config", config_path, "Run configuration (JSON)")->required();
  simulate->add_option("--out", out_path, "CSV path (defaults to the config's output, else stdout)");

  auto* report = app.add_subcommand("report", "Summarize a simulation CSV");
  report->add_option("csv", report_path, "Rows CSV")->required();
  report->add_flag("--json", as_json, "Print JSON instead of text");
  report->add_option("--json-out", json_path, "Also write the JSON summary to this path");

  auto* trace = app.add_subcommand("trace", "Write the per-iteration trace of a single run");
  trace->add_option("--config", config_path, "Run configuration (JSON) with reps = 1")->required();
  trace->add_option("--out", out_path, "CSV path (stdout when omitted)");

  auto* solve = app.add_subcommand("solve", "Solve an analytic Fredholm problem");
  solve->add_option("--problem", problem, "analytic:<id>")->required();
  solve->add_option("--solver", solver, "poly:<degree>, neural or neural:<width>x<depth>");
  solve->add_option("--steps", solve_opt.steps, "Adam steps for the neural solver");
  solve->add_option("--lr", solve_opt.lr, "Adam step size");
  solve->add_option("--nodes", solve_opt.nodes, "Gauss nodes per axis");
  solve->add_option("--seed", solve_opt.seed, "Weight initialisation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*estimate) {
      const fredse::RunConfig cfg = fredse::load_config_file(config_path);
      const auto run = fredse::estimate(cfg, rep);
      emit(out_path, fredse::estimate_to_json(cfg, run).dump(2) + "\n");
    } else if (*simulate) {
      const fredse::RunConfig cfg = fredse::load_config_file(config_path);
      const auto rows = fredse::simulate(cfg);
      std::ostringstream os;
      fredse::write_rows_csv(os, rows, rows.empty() ? 0 : static_cast<int>(rows.front().beta.size()));
      emit(output_path(out_path, cfg), os.str());
    } else if (*report) {
      const fredse::Summary s = fredse::summarize_file(report_path);
      const std::string json = fredse::summary_to_json(s).dump(2) + "\n";
      std::cout << (as_json ? json : fredse::summary_text(s));
      if (!json_path.empty()) fredse::write_file_atomic(json_path, json);
    } else if (*trace) {
      const fredse::RunConfig cfg = fredse::load_config_file(config_path);
      std::ostringstream os;
      fredse::write_trace_csv(os, fredse::trace(cfg));
      emit(out_path, os.str());
    } else if (*solve) {
      const auto r = fredse::solve_analytic(problem, solver, solve_opt);
      std::cout << fredse::solve_to_json(r).dump(2) << "\n";
    }
  } catch (const fredse::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const fredse::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kConfig;
  } catch (const fredse::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fredse::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const fredse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
