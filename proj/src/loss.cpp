// SPDX-License-Identifier: Apache-2.0
#include "semsplit/loss.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "semsplit/error.hpp"
#include "semsplit/ops.hpp"
#include "semsplit/optim.hpp"
#include "semsplit/params.hpp"
#include "semsplit/rng.hpp"

namespace semsplit {

namespace {

Tensor* parent_grad(ag::Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

void check_features(const Tensor& C, int min_groups, const char* op) {
  if (C.rank() != 2) throw InputError(std::string(op) + ": features must be [G, L], got " + shape_str(C.shape()));
  if (C.dim(0) < min_groups) {
    throw InputError(std::string(op) + " needs at least " + std::to_string(min_groups) + " groups, got " + std::to_string(C.dim(0)));
  }
  if (!C.all_finite()) throw InputError(std::string(op) + ": non-finite features");
}

std::vector<double> row_norms(const Tensor& C) {
  std::vector<double> n(static_cast<std::size_t>(C.dim(0)));
  for (int i = 0; i < C.dim(0); ++i) {
    double s = 0.0;
    for (int d = 0; d < C.dim(1); ++d) s += C.at(i, d) * C.at(i, d);
    n[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  return n;
}

double sq_dist(const Tensor& C, int i, int j) {
  double s = 0.0;
  for (int d = 0; d < C.dim(1); ++d) {
    const double t = C.at(i, d) - C.at(j, d);
    s += t * t;
  }
  return s;
}

}  // namespace

void LossWeights::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("loss epsilon must be positive and finite");
  if (!(lambda_repul >= 0.0) || !std::isfinite(lambda_repul)) throw ConfigError("lambda_repul must be finite and non-negative");
  if (!(lambda_center >= 0.0) || !std::isfinite(lambda_center)) throw ConfigError("lambda_center must be finite and non-negative");
}

Tensor target_similarity_matrix(int groups) {
  if (groups < 2) throw InputError("target similarity needs at least 2 groups, got " + std::to_string(groups));
  Tensor T({groups, groups}, -1.0 / (groups - 1));
  for (int i = 0; i < groups; ++i) T.at(i, i) = 1.0;
  return T;
}

Tensor cosine_similarity_matrix(const Tensor& C) {
  check_features(C, 1, "cosine similarity");
  const int G = C.dim(0);
  const std::vector<double> n = row_norms(C);
  for (int i = 0; i < G; ++i) {
    if (n[static_cast<std::size_t>(i)] == 0.0) throw InputError("cosine similarity: feature " + std::to_string(i) + " has zero norm");
  }
  Tensor X({G, G});
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      double dot = 0.0;
      for (int d = 0; d < C.dim(1); ++d) dot += C.at(i, d) * C.at(j, d);
      X.at(i, j) = dot / (n[static_cast<std::size_t>(i)] * n[static_cast<std::size_t>(j)]);
    }
  }
  return X;
}

namespace ag {

Var charbonnier(const Var& s, const Var& s_hat, double epsilon) {
  if (s.shape() != s_hat.shape()) {
    throw InputError("charbonnier: shape mismatch " + shape_str(s.shape()) + " vs " + shape_str(s_hat.shape()));
  }
  if (!(epsilon > 0.0)) throw InputError("charbonnier: epsilon must be positive");
  require(s.size() > 0, "charbonnier of empty batch");
  const Tensor& a = s.value();
  const Tensor& b = s_hat.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += std::sqrt(d * d + epsilon * epsilon);
  }
  const double inv_n = 1.0 / static_cast<double>(a.size());
  return make_result(Tensor::scalar(acc * inv_n), {s, s_hat}, [epsilon, inv_n](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    Tensor* ga = parent_grad(self, 0);
    Tensor* gb = parent_grad(self, 1);
    const double up = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double g = up * d / std::sqrt(d * d + epsilon * epsilon);
      if (ga) (*ga)[i] += g;
      if (gb) (*gb)[i] -= g;
    }
  });
}

Var euclidean_repulsion(const Var& C) {
  check_features(C.value(), 2, "euclidean repulsion");
  const Tensor& cv = C.value();
  const int G = cv.dim(0);
  const double norm = 1.0 / (static_cast<double>(G) * (G - 1));
  double acc = 0.0;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j)
      if (i != j) acc += std::exp(-sq_dist(cv, i, j));
  return make_result(Tensor::scalar(acc * norm), {C}, [norm](Node& self) {
    const Tensor& c = self.parents[0]->value;
    Tensor& g = *parent_grad(self, 0);
    const int G = c.dim(0), L = c.dim(1);
    const double up = self.grad[0] * norm;
    for (int i = 0; i < G; ++i) {
      for (int j = 0; j < G; ++j) {
        if (i == j) continue;
        const double f = -4.0 * up * std::exp(-sq_dist(c, i, j));
        for (int d = 0; d < L; ++d) g.at(i, d) += f * (c.at(i, d) - c.at(j, d));
      }
    }
  });
}

Var center_regularization(const Var& C, double lambda_center) {
  check_features(C.value(), 1, "center regularization");
  const Tensor& cv = C.value();
  const int G = cv.dim(0), L = cv.dim(1);
  std::vector<double> m(static_cast<std::size_t>(L), 0.0);
  for (int i = 0; i < G; ++i)
    for (int d = 0; d < L; ++d) m[static_cast<std::size_t>(d)] += cv.at(i, d) / G;
  double sq = 0.0;
  for (double v : m) sq += v * v;
  return make_result(Tensor::scalar(lambda_center * sq), {C}, [m, lambda_center](Node& self) {
    Tensor& g = *parent_grad(self, 0);
    const int G = g.dim(0), L = g.dim(1);
    const double f = self.grad[0] * lambda_center * 2.0 / G;
    for (int i = 0; i < G; ++i)
      for (int d = 0; d < L; ++d) g.at(i, d) += f * m[static_cast<std::size_t>(d)];
  });
}

Var angular_repulsion(const Var& C) {
  check_features(C.value(), 2, "angular repulsion");
  const Tensor X = cosine_similarity_matrix(C.value());
  const int G = X.dim(0);
  const Tensor T = target_similarity_matrix(G);
  const double norm = 1.0 / (static_cast<double>(G) * (G - 1));
  double acc = 0.0;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j)
      if (i != j) acc += std::pow(X.at(i, j) - T.at(i, j), 2);
  return make_result(Tensor::scalar(acc * norm), {C}, [X, T, norm](Node& self) {
    const Tensor& c = self.parents[0]->value;
    Tensor& g = *parent_grad(self, 0);
    const int G = c.dim(0), L = c.dim(1);
    const std::vector<double> n = row_norms(c);
    const double up = self.grad[0] * norm;
    for (int i = 0; i < G; ++i) {
      const double ni = n[static_cast<std::size_t>(i)];
      for (int j = 0; j < G; ++j) {
        if (i == j) continue;
        const double nj = n[static_cast<std::size_t>(j)];
        const double f = 4.0 * up * (X.at(i, j) - T.at(i, j)) / ni;
        for (int d = 0; d < L; ++d) g.at(i, d) += f * (c.at(j, d) / nj - X.at(i, j) * c.at(i, d) / ni);
      }
    }
  });
}

Var repulsion_loss(const Var& C, const LossWeights& w) {
  return add(add(euclidean_repulsion(C), center_regularization(C, w.lambda_center)), angular_repulsion(C));
}

Var total_loss(const Var& recon, const Var& repul, double lambda_repul) {
  return add(recon, scale(repul, lambda_repul));
}

}  // namespace ag

double charbonnier(const Tensor& s, const Tensor& s_hat, double epsilon) {
  return ag::charbonnier(ag::constant(s), ag::constant(s_hat), epsilon).value().item();
}
double euclidean_repulsion(const Tensor& C) { return ag::euclidean_repulsion(ag::constant(C)).value().item(); }
double center_regularization(const Tensor& C, double lambda_center) {
  return ag::center_regularization(ag::constant(C), lambda_center).value().item();
}
double angular_repulsion(const Tensor& C) { return ag::angular_repulsion(ag::constant(C)).value().item(); }
double repulsion_loss(const Tensor& C, const LossWeights& w) { return ag::repulsion_loss(ag::constant(C), w).value().item(); }
double total_loss(double recon, double repul, double lambda_repul) { return recon + lambda_repul * repul; }

Tensor optimize_free_vectors(const FreeVectorRun& run) {
  if (run.groups < 2 || run.dim < 1 || run.steps < 0) throw ConfigError("free-vector run needs groups >= 2, dim >= 1, steps >= 0");
  run.weights.validate();
  Rng rng(run.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor init({run.groups, run.dim});
  for (std::size_t i = 0; i < init.size(); ++i) init[i] = normal(rng);
  ParamStore store;
  store.add("c", std::move(init));
  AdamConfig cfg;
  cfg.lr = run.lr;
  Adam opt(cfg);
  for (int step = 0; step < run.steps; ++step) {
    const ag::Var c = ag::parameter(store.at("c"));
    ag::backward(ag::repulsion_loss(c, run.weights));
    ParamStore g;
    g.add("c", c.grad());
    opt.step(store, g);
  }
  return store.at("c");
}

}  // namespace semsplit
