#include "fredse/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fredse/error.hpp"
#include "fredse/examples/registry.hpp"

namespace fredse {

using nlohmann::json;
using nlohmann::ordered_json;

std::string SolverSpec::label() const {
  return kind == Kind::Neural ? std::string("neural") : "poly:" + std::to_string(degree);
}

namespace {

int parse_int(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError(key, "expected an integer, got '" + text + "'");
  return v;
}

std::string type_name(const json& v) { return v.type_name(); }

template <class T>
T get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, std::string("expected a number, got ") + type_name(v));
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) return v.get<T>();
      if (v.get<long long>() < 0) throw ConfigError(key, "must be >= 0");
    }
    return v.get<T>();
  } else {
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(key, "must be finite");
    return d;
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(prefix + it.key(), "unknown key");
  }
}

const char* grid_name(GridKind g) { return g == GridKind::Gauss ? "gauss" : "monte_carlo"; }
const char* outer_name(OuterUpdate o) { return o == OuterUpdate::Score ? "score" : "gradient"; }

void check_comparator(const std::string& name, const ExampleBundle& b, const std::string& key) {
  if (name.rfind("poly:", 0) == 0) {
    if (parse_int(key, name.substr(5)) < 0) throw ConfigError(key, "polynomial degree must be >= 0");
    return;
  }
  if (name == "neural" || name.rfind("neural:", 0) == 0) {
    SolverSpec::parse(name);
    return;
  }
  if (!b.comparators.count(name)) {
    std::string known;
    for (const auto& [k, c] : b.comparators) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError(key, "unknown comparator '" + name + "' for example '" + b.name + "'" +
                               (known.empty() ? std::string() : " (known: " + known + ")"));
  }
}

}  // namespace

SolverSpec SolverSpec::parse(const std::string& text) {
  SolverSpec s;
  if (text == "neural") return s;
  if (text.rfind("neural:", 0) == 0) {
    const std::string dims = text.substr(7);
    const auto x = dims.find('x');
    if (x == std::string::npos) throw ConfigError("solver", "expected neural:<width>x<depth>, got '" + text + "'");
    s.width = parse_int("solver.width", dims.substr(0, x));
    s.depth = parse_int("solver.depth", dims.substr(x + 1));
    if (s.width < 1) throw ConfigError("solver.width", "must be >= 1");
    if (s.depth < 1) throw ConfigError("solver.depth", "must be >= 1");
    return s;
  }
  if (text.rfind("poly:", 0) == 0) {
    s.kind = Kind::Polynomial;
    s.degree = parse_int("solver.degree", text.substr(5));
    if (s.degree < 0) throw ConfigError("solver.degree", "must be >= 0");
    return s;
  }
  throw ConfigError("solver", "unknown solver '" + text + "'");
}

ExampleBundle bundle_for(const RunConfig& cfg) {
  BundleOptions opt;
  opt.lambda = cfg.lambda;
  return make_bundle(cfg.example, opt);
}

RunConfig load_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
  reject_unknown(j,
                 {"example", "n", "reps", "base_seed", "solver", "gamma", "max_iter", "tol", "tol_omega", "j1", "j2",
                  "lr_beta", "lr_omega", "fd_step", "lambda", "batch", "beta_init", "grid", "outer_update",
                  "comparators", "output", "record_wall_time"},
                 "");

  RunConfig cfg;
  if (!j.contains("example")) throw ConfigError("example", "is required");
  if (!j["example"].is_string()) throw ConfigError("example", "expected a string");
  cfg.example = j["example"].get<std::string>();

  if (j.contains("lambda") && !j["lambda"].is_null()) cfg.lambda = get_number<double>(j["lambda"], "lambda");
  const ExampleBundle b = bundle_for(cfg);  // validates example and lambda
  if (cfg.example == "sensitivity" && !cfg.lambda) cfg.lambda = b.problem.mode.lambda;

  cfg.n = b.default_n;
  if (j.contains("n")) {
    const long long n = get_number<long long>(j["n"], "n");
    if (n < 1) throw ConfigError("n", "must be >= 1");
    cfg.n = static_cast<std::size_t>(n);
  }
  if (j.contains("reps")) cfg.reps = get_number<int>(j["reps"], "reps");
  if (cfg.reps < 1) throw ConfigError("reps", "must be >= 1");
  if (j.contains("base_seed")) cfg.base_seed = get_number<std::uint64_t>(j["base_seed"], "base_seed");

  cfg.solver.width = b.arch.width();
  cfg.solver.depth = b.arch.depth();
  if (j.contains("solver")) {
    const json& s = j["solver"];
    if (!s.is_object()) throw ConfigError("solver", "expected an object");
    reject_unknown(s, {"kind", "width", "depth", "degree"}, "solver.");
    const std::string kind = s.value("kind", std::string("neural"));
    if (kind == "neural") {
      if (s.contains("degree")) throw ConfigError("solver.degree", "only applies to polynomial solvers");
      if (s.contains("width")) cfg.solver.width = get_number<int>(s["width"], "solver.width");
      if (s.contains("depth")) cfg.solver.depth = get_number<int>(s["depth"], "solver.depth");
      if (cfg.solver.width < 1) throw ConfigError("solver.width", "must be >= 1");
      if (cfg.solver.depth < 1) throw ConfigError("solver.depth", "must be >= 1");
    } else if (kind == "polynomial") {
      if (s.contains("width")) throw ConfigError("solver.width", "only applies to neural solvers");
      if (s.contains("depth")) throw ConfigError("solver.depth", "only applies to neural solvers");
      cfg.solver.kind = SolverSpec::Kind::Polynomial;
      cfg.solver.width = 0;
      cfg.solver.depth = 0;
      if (!s.contains("degree")) throw ConfigError("solver.degree", "is required for polynomial solvers");
      cfg.solver.degree = get_number<int>(s["degree"], "solver.degree");
      if (cfg.solver.degree < 0) throw ConfigError("solver.degree", "must be >= 0");
    } else {
      throw ConfigError("solver.kind", "expected 'neural' or 'polynomial', got '" + kind + "'");
    }
  }

  BiLevelConfig& c = cfg.bilevel;
  c = b.config;
  if (j.contains("gamma")) c.gamma = get_number<int>(j["gamma"], "gamma");
  if (j.contains("max_iter")) c.max_iter = get_number<int>(j["max_iter"], "max_iter");
  if (j.contains("tol")) c.tol = get_number<double>(j["tol"], "tol");
  if (j.contains("tol_omega")) {
    if (j["tol_omega"].is_null()) {
      c.tol_omega.reset();
    } else {
      c.tol_omega = get_number<double>(j["tol_omega"], "tol_omega");
    }
  }
  if (j.contains("j1")) c.j1 = get_number<int>(j["j1"], "j1");
  if (j.contains("j2")) c.j2 = get_number<int>(j["j2"], "j2");
  if (j.contains("lr_beta")) c.lr_beta = get_number<double>(j["lr_beta"], "lr_beta");
  if (j.contains("lr_omega")) c.lr_omega = get_number<double>(j["lr_omega"], "lr_omega");
  if (j.contains("fd_step")) c.fd_step = get_number<double>(j["fd_step"], "fd_step");
  if (j.contains("batch")) c.batch = get_number<int>(j["batch"], "batch");
  if (j.contains("beta_init")) {
    const json& bi = j["beta_init"];
    if (!bi.is_array()) throw ConfigError("beta_init", "expected an array");
    c.beta_init.clear();
    for (std::size_t k = 0; k < bi.size(); ++k) c.beta_init.push_back(get_number<double>(bi[k], "beta_init." + std::to_string(k)));
  }
  if (j.contains("grid")) {
    if (!j["grid"].is_string()) throw ConfigError("grid", "expected a string");
    const std::string g = j["grid"].get<std::string>();
    if (g == "monte_carlo") {
      c.grid = GridKind::MonteCarlo;
    } else if (g == "gauss") {
      c.grid = GridKind::Gauss;
    } else {
      throw ConfigError("grid", "expected 'monte_carlo' or 'gauss', got '" + g + "'");
    }
  }
  if (j.contains("outer_update")) {
    if (!j["outer_update"].is_string()) throw ConfigError("outer_update", "expected a string");
    const std::string o = j["outer_update"].get<std::string>();
    if (o == "gradient") {
      c.outer = OuterUpdate::Gradient;
    } else if (o == "score") {
      c.outer = OuterUpdate::Score;
    } else {
      throw ConfigError("outer_update", "expected 'gradient' or 'score', got '" + o + "'");
    }
  }
  c.validate(b.psi.q);

  if (j.contains("comparators")) {
    const json& cs = j["comparators"];
    if (!cs.is_array()) throw ConfigError("comparators", "expected an array of strings");
    std::set<std::string> seen{cfg.solver.label()};
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const std::string key = "comparators." + std::to_string(k);
      if (!cs[k].is_string()) throw ConfigError(key, "expected a string");
      const std::string name = cs[k].get<std::string>();
      check_comparator(name, b, key);
      if (!seen.insert(name).second) throw ConfigError(key, "duplicate solver label '" + name + "'");
      cfg.comparators.push_back(name);
    }
  }
  if (j.contains("output")) {
    if (!j["output"].is_string()) throw ConfigError("output", "expected a string");
    cfg.output = j["output"].get<std::string>();
  }
  if (j.contains("record_wall_time")) {
    if (!j["record_wall_time"].is_boolean()) throw ConfigError("record_wall_time", "expected true or false");
    cfg.record_wall_time = j["record_wall_time"].get<bool>();
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

ordered_json config_to_json(const RunConfig& cfg) {
  const BiLevelConfig& c = cfg.bilevel;
  ordered_json j;
  j["example"] = cfg.example;
  j["n"] = cfg.n;
  j["reps"] = cfg.reps;
  j["base_seed"] = cfg.base_seed;
  ordered_json s;
  if (cfg.solver.kind == SolverSpec::Kind::Neural) {
    s["kind"] = "neural";
    s["width"] = cfg.solver.width;
    s["depth"] = cfg.solver.depth;
  } else {
    s["kind"] = "polynomial";
    s["degree"] = cfg.solver.degree;
  }
  j["solver"] = s;
  j["gamma"] = c.gamma;
  j["max_iter"] = c.max_iter;
  j["tol"] = c.tol;
  j["tol_omega"] = c.tol_omega ? ordered_json(*c.tol_omega) : ordered_json(nullptr);
  j["j1"] = c.j1;
  j["j2"] = c.j2;
  j["lr_beta"] = c.lr_beta;
  j["lr_omega"] = c.lr_omega;
  j["fd_step"] = c.fd_step;
  j["lambda"] = cfg.lambda ? ordered_json(*cfg.lambda) : ordered_json(nullptr);
  j["batch"] = c.batch;
  j["beta_init"] = c.beta_init;
  j["grid"] = grid_name(c.grid);
  j["outer_update"] = outer_name(c.outer);
  j["comparators"] = cfg.comparators;
  j["output"] = cfg.output;
  j["record_wall_time"] = cfg.record_wall_time;
  return j;
}

std::string serialize_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

}  // namespace fredse
