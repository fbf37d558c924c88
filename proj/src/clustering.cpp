// SPDX-License-Identifier: Apache-2.0
#include "semsplit/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "semsplit/error.hpp"
#include "semsplit/rng.hpp"

namespace semsplit {

namespace {

void check_matrix(const Tensor& m, const char* what) {
  if (m.rank() != 2) throw InputError(std::string(what) + " must be a matrix, got " + shape_str(m.shape()));
  if (!m.all_finite()) throw InputError(std::string(what) + " has non-finite entries");
}

double row_norm(const Tensor& m, int r) {
  double s = 0.0;
  for (int j = 0; j < m.dim(1); ++j) s += m.at(r, j) * m.at(r, j);
  return std::sqrt(s);
}

void check_nonzero_rows(const Tensor& m, const char* what) {
  for (int r = 0; r < m.dim(0); ++r) {
    if (row_norm(m, r) == 0.0) throw InputError(std::string(what) + " row " + std::to_string(r) + " has zero norm");
  }
}

double sq_dist(const Tensor& a, int i, const Tensor& b, int j) {
  double s = 0.0;
  for (int d = 0; d < a.dim(1); ++d) {
    const double t = a.at(i, d) - b.at(j, d);
    s += t * t;
  }
  return s;
}

int nearest(const Tensor& P, int k, const Tensor& C, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int g = 0; g < C.dim(0); ++g) {
    const double d = sq_dist(P, k, C, g);
    if (d < best_d) {
      best_d = d;
      best = g;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace

Tensor GroupAssignment::matrix() const {
  Tensor m({num_users, num_groups});
  for (int k = 0; k < num_users; ++k) m.at(k, group_of[static_cast<std::size_t>(k)]) = 1.0;
  return m;
}

Tensor kmeans_centroids(const Tensor& P, int groups, std::uint64_t seed, int max_iters, double tolerance) {
  check_matrix(P, "feature matrix");
  const int K = P.dim(0), L = P.dim(1);
  if (groups < 1) throw InputError("number of groups must be positive");
  if (groups > K) throw InputError("more groups (" + std::to_string(groups) + ") than users (" + std::to_string(K) + ")");
  check_nonzero_rows(P, "feature matrix");

  Rng rng(seed);
  Tensor C({groups, L});
  auto copy_row = [&](int g, int k) {
    for (int d = 0; d < L; ++d) C.at(g, d) = P.at(k, d);
  };

  // k-means++ seeding.
  std::vector<double> d2(static_cast<std::size_t>(K), std::numeric_limits<double>::infinity());
  copy_row(0, std::uniform_int_distribution<int>(0, K - 1)(rng));
  for (int g = 1; g < groups; ++g) {
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      d2[static_cast<std::size_t>(k)] = std::min(d2[static_cast<std::size_t>(k)], sq_dist(P, k, C, g - 1));
      total += d2[static_cast<std::size_t>(k)];
    }
    int pick = K - 1;
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (int k = 0; k < K; ++k) {
        acc += d2[static_cast<std::size_t>(k)];
        if (u < acc) {
          pick = k;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<int>(0, K - 1)(rng);
    }
    copy_row(g, pick);
  }

  // Lloyd iterations.
  std::vector<int> label(static_cast<std::size_t>(K));
  std::vector<double> dist(static_cast<std::size_t>(K));
  for (int it = 0; it < max_iters; ++it) {
    std::vector<int> count(static_cast<std::size_t>(groups), 0);
    for (int k = 0; k < K; ++k) {
      label[static_cast<std::size_t>(k)] = nearest(P, k, C, &dist[static_cast<std::size_t>(k)]);
      ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(k)])];
    }
    for (int g = 0; g < groups; ++g) {
      if (count[static_cast<std::size_t>(g)] > 0) continue;
      int far = -1;
      for (int k = 0; k < K; ++k) {
        if (count[static_cast<std::size_t>(label[static_cast<std::size_t>(k)])] < 2) continue;
        if (far < 0 || dist[static_cast<std::size_t>(k)] > dist[static_cast<std::size_t>(far)]) far = k;
      }
      --count[static_cast<std::size_t>(label[static_cast<std::size_t>(far)])];
      label[static_cast<std::size_t>(far)] = g;
      dist[static_cast<std::size_t>(far)] = 0.0;
      count[static_cast<std::size_t>(g)] = 1;
    }

    Tensor next({groups, L});
    for (int k = 0; k < K; ++k) {
      const int g = label[static_cast<std::size_t>(k)];
      for (int d = 0; d < L; ++d) next.at(g, d) += P.at(k, d);
    }
    double shift = 0.0;
    for (int g = 0; g < groups; ++g) {
      const double inv = 1.0 / count[static_cast<std::size_t>(g)];
      for (int d = 0; d < L; ++d) next.at(g, d) *= inv;
      shift = std::max(shift, std::sqrt(sq_dist(next, g, C, g)));
    }
    C = std::move(next);
    if (shift < tolerance) break;
  }
  return C;
}

Tensor cosine_cost_matrix(const Tensor& P, const Tensor& C) {
  check_matrix(P, "feature matrix");
  check_matrix(C, "centroid matrix");
  if (P.dim(1) != C.dim(1)) {
    throw InputError("feature width " + std::to_string(P.dim(1)) + " differs from centroid width " + std::to_string(C.dim(1)));
  }
  check_nonzero_rows(P, "feature matrix");
  check_nonzero_rows(C, "centroid matrix");
  const int K = P.dim(0), G = C.dim(0), L = P.dim(1);
  std::vector<double> cn(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) cn[static_cast<std::size_t>(g)] = row_norm(C, g);
  Tensor D({K, G});
  for (int k = 0; k < K; ++k) {
    const double pn = row_norm(P, k);
    for (int g = 0; g < G; ++g) {
      double dot = 0.0;
      for (int d = 0; d < L; ++d) dot += P.at(k, d) * C.at(g, d);
      D.at(k, g) = std::clamp(1.0 - dot / (pn * cn[static_cast<std::size_t>(g)]), 0.0, 2.0);
    }
  }
  return D;
}

std::vector<int> solve_assignment(const Tensor& cost) {
  check_matrix(cost, "cost matrix");
  const int n = cost.dim(0);
  if (cost.dim(1) != n) throw InputError("assignment cost matrix must be square, got " + shape_str(cost.shape()));

  // Shortest augmenting paths with row/column potentials; 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> row_of_col(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = row_of_col[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) col_of_row[static_cast<std::size_t>(row_of_col[j] - 1)] = j - 1;
  return col_of_row;
}

GroupAssignment make_assignment(const Tensor& D, std::vector<int> group_of) {
  GroupAssignment a;
  a.num_users = D.dim(0);
  a.num_groups = D.dim(1);
  a.groups.assign(static_cast<std::size_t>(a.num_groups), {});
  for (int k = 0; k < a.num_users; ++k) {
    const int g = group_of[static_cast<std::size_t>(k)];
    a.groups[static_cast<std::size_t>(g)].push_back(k);
    a.cost += D.at(k, g);
  }
  a.group_of = std::move(group_of);
  return a;
}

GroupAssignment balanced_assign(const Tensor& D, int capacity) {
  check_matrix(D, "cost matrix");
  const int K = D.dim(0), G = D.dim(1);
  if (G < 1 || capacity < 1) throw InputError("need at least one group and positive capacity");
  if (K != G * capacity) {
    throw InputError(std::to_string(K) + " users cannot fill " + std::to_string(G) + " groups of " + std::to_string(capacity));
  }

  Tensor square({K, K});
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < K; ++j) square.at(k, j) = D.at(k, j / capacity);
  }
  const std::vector<int> slot = solve_assignment(square);
  std::vector<int> group_of(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) group_of[static_cast<std::size_t>(k)] = slot[static_cast<std::size_t>(k)] / capacity;

  // Pairwise exchanges between equal-cost alternatives move earlier users to lower groups.
  for (bool changed = true; changed;) {
    changed = false;
    for (int i = 0; i < K; ++i) {
      for (int j = i + 1; j < K; ++j) {
        const int gi = group_of[static_cast<std::size_t>(i)], gj = group_of[static_cast<std::size_t>(j)];
        if (gi <= gj) continue;
        if (D.at(i, gj) + D.at(j, gi) <= D.at(i, gi) + D.at(j, gj)) {
          std::swap(group_of[static_cast<std::size_t>(i)], group_of[static_cast<std::size_t>(j)]);
          changed = true;
        }
      }
    }
  }
  return make_assignment(D, std::move(group_of));
}

GroupAssignment cluster_users(const Tensor& P, int groups, std::uint64_t seed, const ClusterOptions& opts) {
  check_matrix(P, "feature matrix");
  const int K = P.dim(0);
  if (groups < 1 || K % groups != 0) {
    throw InputError(std::to_string(K) + " users are not divisible into " + std::to_string(groups) + " equal groups");
  }
  Tensor X = P;
  if (opts.normalize) {
    check_nonzero_rows(X, "feature matrix");
    for (int k = 0; k < K; ++k) {
      const double n = row_norm(X, k);
      for (int d = 0; d < X.dim(1); ++d) X.at(k, d) /= n;
    }
  }
  const Tensor C = kmeans_centroids(X, groups, seed, opts.max_iters, opts.tolerance);
  return balanced_assign(cosine_cost_matrix(P, C), K / groups);
}

}  // namespace semsplit
