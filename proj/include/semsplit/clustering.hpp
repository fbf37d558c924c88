// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "semsplit/tensor.hpp"

namespace semsplit {

/// Partition of K users into G groups.
struct GroupAssignment {
  int num_users = 0;
  int num_groups = 0;
  std::vector<int> group_of;                // user -> group
  std::vector<std::vector<int>> groups;     // group -> ascending member ids
  double cost = 0.0;                        // sum of the chosen cost entries

  /// Binary K x G membership matrix.
  Tensor matrix() const;
  bool operator==(const GroupAssignment& other) const = default;
};

struct ClusterOptions {
  int max_iters = 100;
  double tolerance = 1e-6;
  bool normalize = false;  // run k-means on L2-normalized rows
  bool operator==(const ClusterOptions&) const = default;
};

/// k-means++ seeding followed by Lloyd iterations. P is [K, L]; returns [G, L].
Tensor kmeans_centroids(const Tensor& P, int groups, std::uint64_t seed, int max_iters = 100,
                        double tolerance = 1e-6);

/// D[k][g] = 1 - cos(p_k, c_g). P is [K, L], C is [G, L].
Tensor cosine_cost_matrix(const Tensor& P, const Tensor& C);

/// Square linear assignment. Returns col_of_row minimizing the summed cost.
std::vector<int> solve_assignment(const Tensor& cost);

/// Minimum-cost assignment with exactly `capacity` users per group. D is [K, G].
/// Among equal-cost optima, earlier users get lower group indices.
GroupAssignment balanced_assign(const Tensor& D, int capacity);

/// Builds a GroupAssignment from a per-user group vector and its cost matrix.
GroupAssignment make_assignment(const Tensor& D, std::vector<int> group_of);

/// k-means centroids, cosine costs and balanced assignment in sequence.
GroupAssignment cluster_users(const Tensor& P, int groups, std::uint64_t seed, const ClusterOptions& opts = {});

}  // namespace semsplit
