#pragma once

#include "fredse/examples/bundle.hpp"

namespace fredse {

/*
 * Fixed-point check for the optimiser: K = 0 and C = -1 on [0, 1], so the
 * second-kind equation gives b = 1, and psi(O, beta, b) = beta - b(0.5)
 * has its root at beta = 1.
 */
ExampleBundle toy_bundle();

}  // namespace fredse
