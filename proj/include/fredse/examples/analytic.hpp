#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fredse/fredholm.hpp"
#include "fredse/solution.hpp"

namespace fredse {

/// A problem on [0, 1] with a closed-form solution.
struct AnalyticProblem {
  std::string id;
  FredholmProblem problem;
  std::shared_ptr<SolutionFn> exact;
};

/*
 *   degenerate:  K(s,t) = st/2, C(t) = -5t/6, second kind      b(t) = t
 *   zero_kernel: K = 0, C(t) = 1 - 2t + 3t^2, second kind      b(t) = -C(t)
 *   tikhonov:    K = 0, C(t) = t^2 - t/2, Tikhonov(0.5)        b(t) = C(t)/0.5
 * None of them depends on the observation or on beta.
 */
std::vector<AnalyticProblem> analytic_problems();
AnalyticProblem analytic_problem(const std::string& id);

/// A one-row placeholder dataset for observation-free problems.
Dataset placeholder_data();

}  // namespace fredse
