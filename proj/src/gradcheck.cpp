#include "altpp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "altpp/errors.hpp"

namespace altpp {
namespace {

double evaluate(const TapeObjective& f, const std::vector<Tensor>& params) {
  Tape tape(false);
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.parameter(p));
  return f(tape, leaves).value().item();
}

}  // namespace

GradCheckResult finite_difference_check(const TapeObjective& f, std::vector<Tensor> params, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    tape.backward(f(tape, leaves));
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }
  GradCheckResult result;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    for (std::size_t i = 0; i < params[ti].size(); ++i) {
      const double saved = params[ti][i];
      params[ti][i] = saved + h;
      const double up = evaluate(f, params);
      params[ti][i] = saved - h;
      const double down = evaluate(f, params);
      params[ti][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[ti][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.worst_tensor = ti;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace altpp
