#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fredse/examples/bundle.hpp"

namespace fredse {

struct BundleOptions {
  std::optional<double> lambda;  // sensitivity only
};

/// Names accepted by make_bundle: mnar, sensitivity, shift, toy, analytic:<id>.
std::vector<std::string> example_names();

/*
 * Builds the named bundle. analytic:<id> wraps the fixture in a bundle whose
 * psi is beta - b(0.5), so beta_star = b*(0.5). Throws ConfigError for an
 * unknown name or an option the example does not take.
 */
ExampleBundle make_bundle(const std::string& name, const BundleOptions& opt = {});

}  // namespace fredse
