#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "altpp/autodiff.hpp"

namespace altpp {

// Builds a scalar loss on `tape` from parameter leaves bound in the same order
// as the parameters passed to finite_difference_check.
using TapeObjective = std::function<Var(Tape& tape, const std::vector<Var>& params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares tape gradients against central differences (f(p+h) - f(p-h)) / 2h
// coordinate by coordinate. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_difference_check(const TapeObjective& f, std::vector<Tensor> params, double h = 1e-5);

}  // namespace altpp
