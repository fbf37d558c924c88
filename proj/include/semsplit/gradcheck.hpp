// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "semsplit/autograd.hpp"
#include "semsplit/rng.hpp"

namespace semsplit {

struct GradCheckOptions {
  int coordinates = 50;     // random coordinates probed
  double step = 1e-6;       // central-difference step
  double tolerance = 1e-4;  // relative error bound
  double abs_floor = 1e-8;  // gradients below this in both routes count as agreeing zeros
};

struct GradCheckResult {
  int checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
  std::string worst;  // description of the worst coordinate
};

using ScalarFn = std::function<ag::Var(const std::vector<ag::Var>&)>;

/// Compares reverse-mode gradients of `fn` w.r.t. inputs[which] against central
/// finite differences evaluated on plain values. The remaining inputs are held
/// constant.
GradCheckResult gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, std::size_t which, Rng& rng,
                          const GradCheckOptions& opts = {});

double relative_error(double analytic, double numeric, double abs_floor);

}  // namespace semsplit
