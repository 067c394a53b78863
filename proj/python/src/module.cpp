#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fredse/error.hpp"
#include "fredse/examples/registry.hpp"
#include "fredse/harness/config.hpp"
#include "fredse/harness/report.hpp"
#include "fredse/harness/run.hpp"

namespace py = pybind11;
using namespace fredse;

namespace {

// Columns of a dataset as a name -> vector map (numpy conversion happens on the Python side).
std::map<std::string, Eigen::VectorXd> columns_of(const Dataset& d) {
  std::map<std::string, Eigen::VectorXd> out;
  for (std::size_t c = 0; c < d.width(); ++c) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) v[static_cast<Eigen::Index>(i)] = d.at(i, c);
    out[d.columns()[c]] = std::move(v);
  }
  return out;
}

std::string rows_text(const std::vector<SimulationRow>& rows) {
  std::ostringstream os;
  write_rows_csv(os, rows, rows.empty() ? 0 : static_cast<int>(rows.front().beta.size()));
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the fredse estimation library";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  m.def("example_names", &example_names);

  m.def("canonical_config", [](const std::string& text) { return serialize_config(load_config(text)); },
        py::arg("config_json"));

  m.def(
      "generate",
      [](const std::string& example, std::size_t n, std::uint64_t seed) {
        const SimulatedData d = make_bundle(example).generate(n, seed);
        return py::make_tuple(columns_of(d.observed), columns_of(d.truth));
      },
      py::arg("example"), py::arg("n"), py::arg("seed"));

  m.def(
      "estimate",
      [](const std::string& text, int rep) {
        const RunConfig cfg = load_config(text);
        EstimateRun run;
        {
          py::gil_scoped_release nogil;
          run = estimate(cfg, rep);
        }
        return estimate_to_json(cfg, run).dump();
      },
      py::arg("config_json"), py::arg("rep") = 0);

  m.def(
      "simulate",
      [](const std::string& text) {
        const RunConfig cfg = load_config(text);
        py::gil_scoped_release nogil;
        return rows_text(simulate(cfg));
      },
      py::arg("config_json"));

  m.def(
      "trace",
      [](const std::string& text) {
        const RunConfig cfg = load_config(text);
        py::gil_scoped_release nogil;
        std::ostringstream os;
        write_trace_csv(os, trace(cfg));
        return os.str();
      },
      py::arg("config_json"));

  m.def(
      "report",
      [](const std::string& csv) {
        std::istringstream in(csv);
        return summary_to_json(summarize_csv(in)).dump();
      },
      py::arg("csv_text"));

  m.def(
      "solve",
      [](const std::string& problem, const std::string& solver, int steps, double lr, int nodes, std::uint64_t seed) {
        SolveOptions opt;
        opt.steps = steps;
        opt.lr = lr;
        opt.nodes = nodes;
        opt.seed = seed;
        py::gil_scoped_release nogil;
        return solve_to_json(solve_analytic(problem, solver, opt)).dump();
      },
      py::arg("problem"), py::arg("solver") = "neural", py::arg("steps") = 5000, py::arg("lr") = 1e-3,
      py::arg("nodes") = 200, py::arg("seed") = 0);
}
