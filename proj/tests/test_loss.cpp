#include <cmath>
#include <numeric>

#include "doctest.h"
#include "semsplit/error.hpp"
#include "semsplit/gradcheck.hpp"
#include "semsplit/loss.hpp"
#include "semsplit/ops.hpp"
#include "semsplit/optim.hpp"
#include "test_helpers.hpp"

using namespace semsplit;
using semsplit::test::max_abs_diff;
using semsplit::test::normal_tensor;
using semsplit::test::random_tensor;

namespace {

Tensor rows(int g, int l, std::vector<double> v) { return Tensor({g, l}, std::move(v)); }

// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
Tensor random_rotation(int n, Rng& rng) {
  Tensor Q = normal_tensor({n, n}, rng);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int d = 0; d < n; ++d) dot += Q.at(i, d) * Q.at(j, d);
      for (int d = 0; d < n; ++d) Q.at(i, d) -= dot * Q.at(j, d);
    }
    double nrm = 0.0;
    for (int d = 0; d < n; ++d) nrm += Q.at(i, d) * Q.at(i, d);
    nrm = std::sqrt(nrm);
    for (int d = 0; d < n; ++d) Q.at(i, d) /= nrm;
  }
  return Q;
}

Tensor rotate(const Tensor& C, const Tensor& Q) {
  Tensor R(C.shape());
  for (int i = 0; i < C.dim(0); ++i)
    for (int a = 0; a < C.dim(1); ++a)
      for (int b = 0; b < C.dim(1); ++b) R.at(i, a) += Q.at(a, b) * C.at(i, b);
  return R;
}

// Centered simplex: e_i - (1/G) 1 in R^G.
Tensor simplex(int G) {
  Tensor C({G, G}, -1.0 / G);
  for (int i = 0; i < G; ++i) C.at(i, i) += 1.0;
  return C;
}

}  // namespace

TEST_CASE("charbonnier reference values") {
  const Tensor a = Tensor({2, 3}, 0.25);
  CHECK(charbonnier(a, a, 1e-3) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(charbonnier(Tensor::scalar(3.0), Tensor::scalar(0.0), 4.0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(charbonnier(a, Tensor({3, 2}), 1e-3), InputError);

  Rng rng(1);
  const Tensor s = random_tensor({4, 3, 5, 5}, rng);
  const Tensor t = random_tensor({4, 3, 5, 5}, rng);
  double oracle = 0.0;
  for (int k = 0; k < 4; ++k) {
    double user = 0.0;
    for (int i = 0; i < 75; ++i) {
      const double d = s[static_cast<std::size_t>(k * 75 + i)] - t[static_cast<std::size_t>(k * 75 + i)];
      user += std::sqrt(d * d + 1e-6);
    }
    oracle += user / 75.0;
  }
  oracle /= 4.0;
  CHECK(std::abs(charbonnier(s, t, 1e-3) - oracle) < 1e-10);
  CHECK(charbonnier(s, t, 1e-3) >= 1e-3);
}

TEST_CASE("target similarity matrix") {
  const Tensor T2 = target_similarity_matrix(2);
  CHECK(T2 == rows(2, 2, {1, -1, -1, 1}));
  const Tensor T5 = target_similarity_matrix(5);
  for (int i = 0; i < 5; ++i) {
    double row = 0.0;
    for (int j = 0; j < 5; ++j) {
      row += T5.at(i, j);
      if (i != j) CHECK(T5.at(i, j) == doctest::Approx(-0.25));
    }
    CHECK(std::abs(row) < 1e-12);
  }
  CHECK_THROWS_AS(target_similarity_matrix(1), InputError);
}

TEST_CASE("repulsion terms reference values") {
  CHECK(euclidean_repulsion(Tensor({4, 3}, 0.7)) == doctest::Approx(1.0));
  const double r = std::sqrt(std::log(2.0));
  CHECK(euclidean_repulsion(rows(2, 2, {0, 0, r, 0})) == doctest::Approx(0.5));
  CHECK(euclidean_repulsion(rows(2, 2, {0, 0, 100, 0})) < 1e-6);
  CHECK_THROWS_AS(euclidean_repulsion(Tensor({1, 3}, 1.0)), InputError);

  CHECK(center_regularization(rows(2, 2, {1, 2, -1, -2}), 1.0) == doctest::Approx(0.0));
  CHECK(center_regularization(rows(3, 2, {1, 2, 1, 2, 1, 2}), 0.3) == doctest::Approx(0.3 * 5.0));
  CHECK(center_regularization(rows(2, 2, {1, 0, 0, 1}), 1.0) == doctest::Approx(0.5));

  CHECK(angular_repulsion(rows(2, 2, {1, 0, -1, 0})) == doctest::Approx(0.0));
  CHECK(angular_repulsion(rows(2, 2, {1, 0, 0, 1})) == doctest::Approx(1.0));
  const double pi = std::acos(-1.0);
  Tensor tri({3, 2});
  for (int i = 0; i < 3; ++i) {
    tri.at(i, 0) = std::cos(2 * pi * i / 3);
    tri.at(i, 1) = std::sin(2 * pi * i / 3);
  }
  CHECK(std::abs(angular_repulsion(tri)) < 1e-12);
  CHECK_THROWS_AS(angular_repulsion(rows(2, 2, {1, 0, 0, 0})), InputError);

  LossWeights w;
  CHECK(repulsion_loss(rows(2, 2, {1, 0, -1, 0}), w) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));

  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor C = normal_tensor({6, 8}, rng, 0.4);
    const double parts = euclidean_repulsion(C) + center_regularization(C, w.lambda_center) + angular_repulsion(C);
    CHECK(std::abs(repulsion_loss(C, w) - parts) < 1e-12);
    const double e = euclidean_repulsion(C);
    CHECK(e > 0.0);
    CHECK(e <= 1.0);
    CHECK(angular_repulsion(C) >= 0.0);
    CHECK(center_regularization(C, w.lambda_center) >= 0.0);
  }
}

TEST_CASE("total loss arithmetic") {
  CHECK(total_loss(1.5, 7.0, 0.0) == 1.5);
  CHECK(total_loss(1.0, 2.0, 0.5) == 2.0);
  CHECK(total_loss(0.7, 0.0, 1.0) == 0.7);
  const ag::Var t = ag::total_loss(ag::constant(Tensor::scalar(1.0)), ag::constant(Tensor::scalar(2.0)), 0.5);
  CHECK(t.value().item() == 2.0);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(31);
  LossWeights w;
  const std::vector<std::pair<const char*, ScalarFn>> fns = {
      {"euclidean", [](const std::vector<ag::Var>& v) { return ag::euclidean_repulsion(v[0]); }},
      {"center", [](const std::vector<ag::Var>& v) { return ag::center_regularization(v[0], 0.37); }},
      {"angular", [](const std::vector<ag::Var>& v) { return ag::angular_repulsion(v[0]); }},
      {"repulsion", [w](const std::vector<ag::Var>& v) { return ag::repulsion_loss(v[0], w); }},
  };
  for (const auto& [name, fn] : fns) {
    CAPTURE(name);
    const Tensor C = normal_tensor({5, 16}, rng, 0.3);
    const GradCheckResult r = gradcheck(fn, {C}, 0, rng);
    CAPTURE(r.worst);
    CHECK(r.checked == 50);
    CHECK(r.passed);
  }

  const Tensor s = random_tensor({3, 3, 4, 4}, rng);
  const Tensor t = random_tensor({3, 3, 4, 4}, rng);
  const ScalarFn charb = [](const std::vector<ag::Var>& v) { return ag::charbonnier(v[0], v[1], 1e-3); };
  for (std::size_t which : {0u, 1u}) {
    const GradCheckResult r = gradcheck(charb, {s, t}, which, rng);
    CAPTURE(r.worst);
    CHECK(r.passed);
  }
}

TEST_CASE("repulsion terms are permutation and rotation invariant") {
  Rng rng(12);
  const Tensor C = normal_tensor({5, 6}, rng, 0.5);
  const Tensor Q = random_rotation(6, rng);
  const Tensor R = rotate(C, Q);
  Tensor P({5, 6});
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i)
    for (int d = 0; d < 6; ++d) P.at(i, d) = C.at(perm[static_cast<std::size_t>(i)], d);

  for (const Tensor* X : {&R, static_cast<const Tensor*>(&P)}) {
    CHECK(std::abs(euclidean_repulsion(*X) - euclidean_repulsion(C)) < 1e-12);
    CHECK(std::abs(center_regularization(*X, 0.5) - center_regularization(C, 0.5)) < 1e-12);
    CHECK(std::abs(angular_repulsion(*X) - angular_repulsion(C)) < 1e-12);
  }
}

TEST_CASE("centered simplex is a stationary point of the angular term") {
  for (int G : {2, 3, 5, 8}) {
    const Tensor C = simplex(G);
    CHECK(std::abs(angular_repulsion(C)) < 1e-12);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < C.size(); ++i) {
      Tensor a = C, b = C;
      a[i] += h;
      b[i] -= h;
      worst = std::max(worst, std::abs(angular_repulsion(a) - angular_repulsion(b)) / (2 * h));
    }
    CHECK(worst < 1e-6);
    ag::Var c = ag::parameter(C);
    ag::backward(ag::angular_repulsion(c));
    CHECK(max_abs_diff(c.grad(), Tensor(C.shape())) < 1e-12);
  }
}

TEST_CASE("free vectors converge to the equiangular configuration") {
  Rng rng(2025);
  ParamStore store;
  store.add("c", normal_tensor({5, 64}, rng));
  LossWeights w;
  w.lambda_center = 0.01;
  AdamConfig cfg;
  cfg.lr = 1e-2;
  Adam opt(cfg);
  for (int step = 0; step < 2000; ++step) {
    ag::Var c = ag::parameter(store.at("c"));
    ag::backward(ag::repulsion_loss(c, w));
    ParamStore g;
    g.add("c", c.grad());
    opt.step(store, g);
  }
  const Tensor& C = store.at("c");
  const Tensor X = cosine_similarity_matrix(C);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (i != j) CHECK(std::abs(X.at(i, j) + 0.25) <= 0.02);
  double mean_sq = 0.0;
  for (int d = 0; d < 64; ++d) {
    double m = 0.0;
    for (int i = 0; i < 5; ++i) m += C.at(i, d) / 5.0;
    mean_sq += m * m;
  }
  CHECK(std::sqrt(mean_sq) < 0.05);
}

TEST_CASE("optimize_free_vectors matches a hand-written Adam loop") {
  FreeVectorRun run;
  run.steps = 200;
  Rng rng(run.seed);
  ParamStore store;
  store.add("c", normal_tensor({run.groups, run.dim}, rng));
  Adam opt(AdamConfig{.lr = run.lr});
  for (int step = 0; step < run.steps; ++step) {
    ag::Var c = ag::parameter(store.at("c"));
    ag::backward(ag::repulsion_loss(c, run.weights));
    ParamStore g;
    g.add("c", c.grad());
    opt.step(store, g);
  }
  CHECK(test::max_abs_diff(optimize_free_vectors(run), store.at("c")) < 1e-12);
}
