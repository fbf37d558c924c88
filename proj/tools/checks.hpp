// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semsplit/gradcheck.hpp"
#include "semsplit/loss.hpp"

namespace semsplit::checks {

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Finite-difference checks of the Charbonnier loss, the three repulsion terms
/// and the transmit path (AWGN and Rayleigh, with and without interference).
std::vector<CheckLine> loss_gradient_checks(std::uint64_t seed, const GradCheckOptions& opts = {});

struct EquiangularOutcome {
  Tensor C;
  Tensor X;
  double max_offdiag_error = 0.0;  // max |X_ij + 1/(G-1)|
  double mean_norm = 0.0;
  double seconds = 0.0;
};

EquiangularOutcome run_equiangular(const FreeVectorRun& run);
/// Off-diagonal cosines within `tol` of -1/(G-1) and mean-vector norm below `mean_tol`.
CheckLine equiangular_check(const EquiangularOutcome& r, double tol = 0.02, double mean_tol = 0.05);

std::string format_line(const CheckLine& c);

}  // namespace semsplit::checks
