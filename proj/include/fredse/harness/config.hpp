#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fredse/bilevel.hpp"
#include "fredse/examples/bundle.hpp"
#include "json.hpp"

namespace fredse {

struct SolverSpec {
  enum class Kind { Neural, Polynomial };
  Kind kind = Kind::Neural;
  int width = 0;
  int depth = 0;
  int degree = 0;

  /// "neural" or "poly:<degree>".
  std::string label() const;
  /// Parses "neural", "neural:<width>x<depth>" or "poly:<degree>".
  static SolverSpec parse(const std::string& text);
};

/*
 * One simulation or estimation job. Every field is filled: values omitted
 * from the JSON text take the example's defaults.
 */
struct RunConfig {
  std::string example;
  std::size_t n = 0;
  int reps = 1;
  std::uint64_t base_seed = 0;
  SolverSpec solver;
  BiLevelConfig bilevel;          // seed is set per replication
  std::optional<double> lambda;   // sensitivity only
  std::vector<std::string> comparators;
  std::string output;
  bool record_wall_time = false;  // wall_ms is written as NA unless set
};

/// Parses, defaults and validates. Throws ConfigError with the key path.
RunConfig load_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

/// Canonical JSON: fixed key order, every field present.
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
std::string serialize_config(const RunConfig& cfg);

/// The bundle a config refers to (with lambda applied).
ExampleBundle bundle_for(const RunConfig& cfg);

}  // namespace fredse
