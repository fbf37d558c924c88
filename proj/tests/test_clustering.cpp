#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "semsplit/clustering.hpp"
#include "semsplit/error.hpp"
#include "test_helpers.hpp"

using namespace semsplit;
using semsplit::test::normal_tensor;
using semsplit::test::random_tensor;

namespace {

// Exhaustive search over every balanced partition: users are placed one at a
// time into any group with spare room.
double brute_force_balanced(const Tensor& D, int capacity, std::vector<int>* best_groups = nullptr) {
  const int K = D.dim(0), G = D.dim(1);
  std::vector<int> fill(static_cast<std::size_t>(G), 0), cur(static_cast<std::size_t>(K));
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, double)> rec = [&](int k, double acc) {
    if (k == K) {
      if (acc < best) {
        best = acc;
        if (best_groups) *best_groups = cur;
      }
      return;
    }
    for (int g = 0; g < G; ++g) {
      if (fill[static_cast<std::size_t>(g)] == capacity) continue;
      ++fill[static_cast<std::size_t>(g)];
      cur[static_cast<std::size_t>(k)] = g;
      rec(k + 1, acc + D.at(k, g));
      --fill[static_cast<std::size_t>(g)];
    }
  };
  rec(0, 0.0);
  return best;
}

double brute_force_permutation(const Tensor& C) {
  const int n = C.dim(0);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += C.at(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

void check_feasible(const GroupAssignment& a, int K, int G) {
  REQUIRE(a.num_users == K);
  REQUIRE(a.num_groups == G);
  const Tensor M = a.matrix();
  for (int k = 0; k < K; ++k) {
    double row = 0.0;
    for (int g = 0; g < G; ++g) row += M.at(k, g);
    CHECK(row == 1.0);
  }
  for (int g = 0; g < G; ++g) {
    double col = 0.0;
    for (int k = 0; k < K; ++k) col += M.at(k, g);
    CHECK(col == K / G);
    for (int k : a.groups[static_cast<std::size_t>(g)]) CHECK(a.group_of[static_cast<std::size_t>(k)] == g);
  }
}

// Two clouds in the positive orthant around distinct directions.
Tensor two_clouds(int per_cloud, Rng& rng) {
  Tensor P({2 * per_cloud, 6});
  std::normal_distribution<double> n(0.0, 0.05);
  for (int k = 0; k < 2 * per_cloud; ++k) {
    const bool second = k >= per_cloud;
    for (int d = 0; d < 6; ++d) P.at(k, d) = ((d < 3) != second ? 3.0 : 0.2) + n(rng);
  }
  return P;
}

}  // namespace

TEST_CASE("cosine cost matrix reference values") {
  const Tensor P({3, 2}, std::vector<double>{2, 0, -1, 0, 0, 5});
  const Tensor C({1, 2}, std::vector<double>{1, 0});
  const Tensor D = cosine_cost_matrix(P, C);
  CHECK(D.at(0, 0) == doctest::Approx(0.0));
  CHECK(D.at(1, 0) == doctest::Approx(2.0));
  CHECK(D.at(2, 0) == doctest::Approx(1.0));

  Rng rng(3);
  const Tensor Q = normal_tensor({10, 7}, rng);
  const Tensor R = normal_tensor({4, 7}, rng);
  const Tensor E = cosine_cost_matrix(Q, R);
  for (std::size_t i = 0; i < E.size(); ++i) {
    CHECK(E[i] >= 0.0);
    CHECK(E[i] <= 2.0);
  }
  CHECK_THROWS_AS(cosine_cost_matrix(Tensor({2, 2}, std::vector<double>{0, 0, 1, 1}), R.reshaped({7, 4})), InputError);
  CHECK_THROWS_AS(cosine_cost_matrix(Tensor({1, 2}, std::vector<double>{0, 0}), C), InputError);
}

TEST_CASE("square assignment matches permutation search") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 7;
    const Tensor C = random_tensor({n, n}, rng, 0.0, 2.0);
    const std::vector<int> col = solve_assignment(C);
    std::vector<int> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += C.at(i, col[static_cast<std::size_t>(i)]);
    CHECK(s == doctest::Approx(brute_force_permutation(C)).epsilon(1e-12));
  }
}

TEST_CASE("balanced assignment reference example") {
  const Tensor D({4, 2}, std::vector<double>{0, 1, 1, 0, 0, 1, 1, 0});
  const GroupAssignment a = balanced_assign(D, 2);
  CHECK(a.groups[0] == std::vector<int>{0, 2});
  CHECK(a.groups[1] == std::vector<int>{1, 3});
  CHECK(a.cost == 0.0);
  CHECK_THROWS_AS(balanced_assign(D, 3), InputError);
}

TEST_CASE("balanced assignment equals exhaustive balanced search") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = std::vector<int>{4, 6, 8}[static_cast<std::size_t>(trial % 3)];
    const int G = (trial / 3) % 2 == 0 ? 2 : K / 2;
    const Tensor D = random_tensor({K, G}, rng, 0.0, 2.0);
    const GroupAssignment a = balanced_assign(D, K / G);
    check_feasible(a, K, G);
    CHECK(a.cost == doctest::Approx(brute_force_balanced(D, K / G)).epsilon(1e-12));
  }
}

TEST_CASE("6x2 balanced assignment checks all twenty partitions") {
  Rng rng(5);
  const Tensor D = random_tensor({6, 2}, rng, 0.0, 2.0);
  double best = std::numeric_limits<double>::infinity();
  int partitions = 0;
  for (int mask = 0; mask < 64; ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) != 3) continue;
    ++partitions;
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += D.at(k, (mask >> k) & 1);
    best = std::min(best, s);
  }
  CHECK(partitions == 20);
  CHECK(balanced_assign(D, 3).cost == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("equal costs resolve toward lower group indices") {
  const Tensor D({6, 3}, 0.5);
  const GroupAssignment a = balanced_assign(D, 2);
  CHECK(a.group_of == std::vector<int>{0, 0, 1, 1, 2, 2});

  // Partial ties: users 0 and 3 are interchangeable, so user 0 takes the lower group.
  const Tensor E({4, 2}, std::vector<double>{0.3, 0.3, 0.0, 1.0, 1.0, 0.0, 0.3, 0.3});
  CHECK(balanced_assign(E, 2).group_of == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("k-means on two clouds matches exhaustive 2-partition") {
  Rng rng(8);
  const Tensor P = two_clouds(4, rng);
  const int K = P.dim(0), L = P.dim(1);

  double best = std::numeric_limits<double>::infinity();
  Tensor best_means;
  for (int mask = 1; mask < (1 << K) - 1; ++mask) {
    Tensor means({2, L});
    int cnt[2] = {0, 0};
    for (int k = 0; k < K; ++k) {
      const int g = (mask >> k) & 1;
      ++cnt[g];
      for (int d = 0; d < L; ++d) means.at(g, d) += P.at(k, d);
    }
    for (int g = 0; g < 2; ++g)
      for (int d = 0; d < L; ++d) means.at(g, d) /= cnt[g];
    double sse = 0.0;
    for (int k = 0; k < K; ++k) {
      const int g = (mask >> k) & 1;
      for (int d = 0; d < L; ++d) sse += std::pow(P.at(k, d) - means.at(g, d), 2);
    }
    if (sse < best - 1e-12) {
      best = sse;
      best_means = means;
    }
  }

  const Tensor C = kmeans_centroids(P, 2, 99);
  // Match centroids to oracle means regardless of order.
  auto dist = [&](int i, int j) {
    double s = 0.0;
    for (int d = 0; d < L; ++d) s += std::pow(C.at(i, d) - best_means.at(j, d), 2);
    return std::sqrt(s);
  };
  const double direct = std::max(dist(0, 0), dist(1, 1));
  const double swapped = std::max(dist(0, 1), dist(1, 0));
  CHECK(std::min(direct, swapped) < 1e-9);
}

TEST_CASE("k-means edge cases") {
  Rng rng(4);
  const Tensor P = normal_tensor({5, 3}, rng);
  const Tensor C = kmeans_centroids(P, 5, 1);
  double sse = 0.0;
  for (int k = 0; k < 5; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int g = 0; g < 5; ++g) {
      double s = 0.0;
      for (int d = 0; d < 3; ++d) s += std::pow(P.at(k, d) - C.at(g, d), 2);
      best = std::min(best, s);
    }
    sse += best;
  }
  CHECK(sse == 0.0);
  CHECK(kmeans_centroids(P, 2, 7) == kmeans_centroids(P, 2, 7));
  CHECK_THROWS_AS(kmeans_centroids(P, 6, 1), InputError);
  Tensor Z = P;
  for (int d = 0; d < 3; ++d) Z.at(2, d) = 0.0;
  CHECK_THROWS_AS(kmeans_centroids(Z, 2, 1), InputError);

  // Duplicate points force the empty-cluster repair path.
  const Tensor dup({4, 2}, std::vector<double>{1, 1, 1, 1, 1, 1, 2, 0.5});
  const Tensor Cd = kmeans_centroids(dup, 3, 0);
  CHECK(Cd.all_finite());
}

TEST_CASE("cluster_users recovers separated clouds") {
  Rng rng(21);
  const Tensor P = two_clouds(5, rng);
  std::vector<int> oracle;
  const Tensor D_all = cosine_cost_matrix(P, kmeans_centroids(P, 2, 0));
  brute_force_balanced(D_all, 5, &oracle);
  const GroupAssignment a = cluster_users(P, 2, 0);
  CHECK(a.group_of == oracle);
  std::vector<int> first(a.groups[static_cast<std::size_t>(a.group_of[0])]);
  CHECK(first == std::vector<int>{0, 1, 2, 3, 4});

  const GroupAssignment one = cluster_users(P, 1, 0);
  CHECK(one.groups.size() == 1);
  CHECK(one.groups[0].size() == 10);
  const GroupAssignment singles = cluster_users(P, 10, 0);
  for (const auto& g : singles.groups) CHECK(g.size() == 1);
  CHECK_THROWS_AS(cluster_users(P, 3, 0), InputError);
}

TEST_CASE("cluster_users properties on random features") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int G = 1 + trial % 5;
    const int K = G * (1 + trial % 4);
    const Tensor P = normal_tensor({K, 12}, rng);
    const GroupAssignment a = cluster_users(P, G, static_cast<std::uint64_t>(trial));
    check_feasible(a, K, G);
    CHECK(a == cluster_users(P, G, static_cast<std::uint64_t>(trial)));

    Tensor scaled = P;
    std::uniform_real_distribution<double> s(0.1, 10.0);
    for (int k = 0; k < K; ++k) {
      const double f = s(rng);
      for (int d = 0; d < 12; ++d) scaled.at(k, d) *= f;
    }
    ClusterOptions norm;
    norm.normalize = true;
    CHECK(cluster_users(P, G, 3, norm).group_of == cluster_users(scaled, G, 3, norm).group_of);
    const Tensor C = kmeans_centroids(P, G, 3);
    CHECK(test::max_abs_diff(cosine_cost_matrix(P, C), cosine_cost_matrix(scaled, C)) < 1e-12);
  }
}
