// SPDX-License-Identifier: Apache-2.0
#include "semsplit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semsplit/error.hpp"

namespace semsplit {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, std::size_t which, Rng& rng,
                          const GradCheckOptions& opts) {
  require(which < inputs.size(), "gradcheck: input index out of range");
  std::vector<ag::Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.emplace_back(inputs[i], i == which);
  ag::Var out = fn(vars);
  ag::backward(out);
  const Tensor analytic = vars[which].grad();

  auto evaluate = [&](const Tensor& perturbed) {
    std::vector<ag::Var> cvars;
    for (std::size_t i = 0; i < inputs.size(); ++i) cvars.emplace_back(i == which ? perturbed : inputs[i], false);
    return fn(cvars).value().item();
  };

  GradCheckResult res;
  const std::size_t n = inputs[which].size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const int count = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(opts.coordinates)));
  for (int t = 0; t < count; ++t) {
    const std::size_t i = static_cast<int>(n) <= opts.coordinates ? static_cast<std::size_t>(t) : pick(rng);
    Tensor plus = inputs[which], minus = inputs[which];
    plus[i] += opts.step;
    minus[i] -= opts.step;
    const double numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * opts.step);
    const double err = relative_error(analytic[i], numeric, opts.abs_floor);
    ++res.checked;
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      std::ostringstream os;
      os << "coord " << i << ": analytic " << analytic[i] << " numeric " << numeric;
      res.worst = os.str();
    }
  }
  res.passed = res.max_rel_error <= opts.tolerance;
  return res;
}

}  // namespace semsplit
