#include "fredse/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <map>
#include <sstream>

#include "fredse/error.hpp"
#include "fredse/util/csv.hpp"
#include "fredse/util/format.hpp"

namespace fredse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
  int count = 0;
  double mean = kNaN;
  double sd = kNaN;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  double sum = 0.0;
  for (double x : xs) {
    if (std::isnan(x)) continue;
    sum += x;
    ++m.count;
  }
  if (m.count == 0) return m;
  m.mean = sum / m.count;
  if (m.count < 2) return m;
  double ss = 0.0;
  for (double x : xs) {
    if (!std::isnan(x)) ss += (x - m.mean) * (x - m.mean);
  }
  m.sd = std::sqrt(ss / (m.count - 1));
  return m;
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json vector_json(const std::vector<double>& v) {
  auto j = nlohmann::ordered_json::array();
  for (double x : v) j.push_back(number_or_null(x));
  return j;
}

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

Summary summarize_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  for (const char* name : {"example", "rep", "seed", "solver", "beta_1", "bias_1", "iterations", "converged",
                           "loss_psi", "loss_K", "wall_ms"}) {
    t.column(name);
  }
  std::vector<std::size_t> beta_cols;
  std::vector<std::size_t> bias_cols;
  for (int k = 1;; ++k) {
    const std::string beta = "beta_" + std::to_string(k);
    const std::string bias = "bias_" + std::to_string(k);
    const bool has_beta = std::find(t.header.begin(), t.header.end(), beta) != t.header.end();
    const bool has_bias = std::find(t.header.begin(), t.header.end(), bias) != t.header.end();
    if (!has_beta && !has_bias) break;
    beta_cols.push_back(t.column(beta));
    bias_cols.push_back(t.column(bias));
  }
  const std::size_t q = bias_cols.size();
  const std::size_t c_example = t.column("example");
  const std::size_t c_solver = t.column("solver");
  const std::size_t c_iter = t.column("iterations");
  const std::size_t c_conv = t.column("converged");
  const std::size_t c_wall = t.column("wall_ms");

  struct Acc {
    int rows = 0;
    int converged = 0;
    std::vector<std::vector<double>> bias, beta;
    std::vector<double> iterations, wall;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  Summary s;
  for (const auto& row : t.rows) {
    if (s.example.empty()) s.example = row[c_example];
    const std::string& label = row[c_solver];
    auto [it, fresh] = acc.try_emplace(label);
    Acc& a = it->second;
    if (fresh) {
      order.push_back(label);
      a.bias.resize(q);
      a.beta.resize(q);
    }
    ++a.rows;
    const double conv = parse_csv_double("converged", row[c_conv]);
    if (conv != 0.0 && conv != 1.0) throw ParseError("converged", "expected 0 or 1, got '" + row[c_conv] + "'");
    if (conv == 1.0) ++a.converged;
    for (std::size_t k = 0; k < q; ++k) {
      a.bias[k].push_back(parse_csv_double(t.header[bias_cols[k]], row[bias_cols[k]]));
      a.beta[k].push_back(parse_csv_double(t.header[beta_cols[k]], row[beta_cols[k]]));
    }
    a.iterations.push_back(parse_csv_double("iterations", row[c_iter]));
    a.wall.push_back(parse_csv_double("wall_ms", row[c_wall]));
  }

  for (const std::string& label : order) {
    const Acc& a = acc.at(label);
    SolverSummary out;
    out.solver = label;
    out.rows = a.rows;
    out.converged = a.converged;
    out.convergence_rate = static_cast<double>(a.converged) / a.rows;
    for (std::size_t k = 0; k < q; ++k) {
      const Moments mb = moments(a.bias[k]);
      out.used.push_back(mb.count);
      out.mean_bias.push_back(mb.mean);
      out.sd_bias.push_back(mb.sd);
      out.mean_beta.push_back(moments(a.beta[k]).mean);
    }
    out.mean_iterations = moments(a.iterations).mean;
    out.mean_wall_ms = moments(a.wall).mean;
    s.solvers.push_back(std::move(out));
  }
  return s;
}

Summary summarize_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return summarize_csv(in);
}

std::string summary_text(const Summary& s) {
  std::ostringstream os;
  os << "example: " << (s.example.empty() ? "NA" : s.example) << '\n';
  for (const SolverSummary& r : s.solvers) {
    os << '\n' << r.solver << "  (" << r.rows << " rows, converged " << r.converged << '/' << r.rows << ")\n";
    for (std::size_t k = 0; k < r.mean_bias.size(); ++k) {
      os << "  beta_" << k + 1 << "  mean " << fixed(r.mean_beta[k]) << "  bias " << fixed(r.mean_bias[k]) << " ("
         << fixed(r.sd_bias[k]) << ")  n=" << r.used[k] << '\n';
    }
    os << "  mean iterations " << fixed(r.mean_iterations, 1) << "  mean wall ms " << fixed(r.mean_wall_ms, 1)
       << '\n';
  }
  return os.str();
}

nlohmann::ordered_json summary_to_json(const Summary& s) {
  nlohmann::ordered_json j;
  j["example"] = s.example;
  auto arr = nlohmann::ordered_json::array();
  for (const SolverSummary& r : s.solvers) {
    nlohmann::ordered_json e;
    e["solver"] = r.solver;
    e["rows"] = r.rows;
    e["converged"] = r.converged;
    e["convergence_rate"] = r.convergence_rate;
    e["used"] = r.used;
    e["mean_bias"] = vector_json(r.mean_bias);
    e["sd_bias"] = vector_json(r.sd_bias);
    e["mean_beta"] = vector_json(r.mean_beta);
    e["mean_iterations"] = number_or_null(r.mean_iterations);
    e["mean_wall_ms"] = number_or_null(r.mean_wall_ms);
    arr.push_back(std::move(e));
  }
  j["solvers"] = std::move(arr);
  return j;
}

}  // namespace fredse
