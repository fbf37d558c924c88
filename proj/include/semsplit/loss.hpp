// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reconstruction and repulsion objectives. Group common features are passed as
// one matrix C with a row per group.

#include <cstdint>

#include "semsplit/autograd.hpp"
#include "semsplit/tensor.hpp"

namespace semsplit {

struct LossWeights {
  double lambda_repul = 0.1;
  double lambda_center = 0.01;
  double epsilon = 1e-3;

  /// Throws ConfigError unless epsilon > 0 and the weights are finite and non-negative.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// T_ii = 1, T_ij = -1/(G-1).
Tensor target_similarity_matrix(int groups);

/// Pairwise cosine similarities of the rows of C.
Tensor cosine_similarity_matrix(const Tensor& C);

namespace ag {

/// Mean over all elements of sqrt((s - s_hat)^2 + eps^2).
Var charbonnier(const Var& s, const Var& s_hat, double epsilon);

/// 1/(G(G-1)) * sum_{i != j} exp(-|c_i - c_j|^2).
Var euclidean_repulsion(const Var& C);
/// lambda_c * |mean_i c_i|^2.
Var center_regularization(const Var& C, double lambda_center);
/// 1/(G(G-1)) * sum_{i != j} (cos(c_i, c_j) - T_ij)^2.
Var angular_repulsion(const Var& C);
Var repulsion_loss(const Var& C, const LossWeights& w);
/// recon + lambda * repul.
Var total_loss(const Var& recon, const Var& repul, double lambda_repul);

}  // namespace ag

double charbonnier(const Tensor& s, const Tensor& s_hat, double epsilon);
double euclidean_repulsion(const Tensor& C);
double center_regularization(const Tensor& C, double lambda_center);
double angular_repulsion(const Tensor& C);
double repulsion_loss(const Tensor& C, const LossWeights& w);
double total_loss(double recon, double repul, double lambda_repul);

struct FreeVectorRun {
  int groups = 5;
  int dim = 64;
  int steps = 2000;
  double lr = 1e-2;
  LossWeights weights;
  std::uint64_t seed = 2025;
};

/// Optimizes G free N(0, 1) vectors under repulsion_loss alone with Adam; returns [G, dim].
Tensor optimize_free_vectors(const FreeVectorRun& run);

}  // namespace semsplit
