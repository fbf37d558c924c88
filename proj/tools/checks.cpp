// SPDX-License-Identifier: Apache-2.0
#include "checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "semsplit/channel.hpp"
#include "semsplit/ops.hpp"

namespace semsplit::checks {

namespace {

Tensor normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

CheckLine from_result(const std::string& name, const GradCheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d coordinates, max rel error %.3g", r.checked, r.max_rel_error);
  std::string detail = buf;
  if (!r.passed) detail += "; worst " + r.worst;
  return {name, r.passed, detail};
}

}  // namespace

std::vector<CheckLine> loss_gradient_checks(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  std::vector<CheckLine> out;

  const Tensor s = normal({4, 3, 4, 4}, rng);
  const Tensor t = normal({4, 3, 4, 4}, rng);
  const ScalarFn charb = [](const std::vector<ag::Var>& v) { return ag::charbonnier(v[0], v[1], 1e-3); };
  out.push_back(from_result("charbonnier d/ds_hat", gradcheck(charb, {s, t}, 1, rng, opts)));

  const Tensor C = normal({5, 12}, rng);
  out.push_back(from_result("euclidean repulsion",
                            gradcheck([](const std::vector<ag::Var>& v) { return ag::euclidean_repulsion(v[0]); }, {C}, 0, rng, opts)));
  out.push_back(from_result("center regularization",
                            gradcheck([](const std::vector<ag::Var>& v) { return ag::center_regularization(v[0], 0.01); }, {C}, 0,
                                      rng, opts)));
  out.push_back(from_result("angular repulsion",
                            gradcheck([](const std::vector<ag::Var>& v) { return ag::angular_repulsion(v[0]); }, {C}, 0, rng, opts)));

  for (ChannelModel m : {ChannelModel::AWGN, ChannelModel::Rayleigh}) {
    for (bool interference : {false, true}) {
      Rng chrng(rng());
      const ChannelRealization ch = sample_channel(m, 4, 1.0, 12.0, chrng);
      const Tensor W = normal({4, 16}, rng);
      const GroupAssignment a = make_assignment(Tensor({4, 2}), {0, 1, 1, 0});
      const std::uint64_t noise_seed = rng();
      const ScalarFn fn = [&](const std::vector<ag::Var>& v) {
        Rng noise(noise_seed);
        const ag::Var rc = ag::transmit_common(v[0], a, ch, interference, noise);
        const ag::Var rp = ag::transmit_private(v[1], ch, interference, noise);
        return ag::sum(ag::mul(ag::concat_cols({rc, rp}), ag::constant(W)));
      };
      const Tensor Cg = normal({2, 6}, rng);
      const Tensor P = normal({4, 10}, rng);
      const std::string tag = "transmit " + to_string(m) + (interference ? " +interference" : "");
      out.push_back(from_result(tag + " d/dC", gradcheck(fn, {Cg, P}, 0, rng, opts)));
      out.push_back(from_result(tag + " d/dP", gradcheck(fn, {Cg, P}, 1, rng, opts)));
    }
  }
  return out;
}

EquiangularOutcome run_equiangular(const FreeVectorRun& run) {
  EquiangularOutcome r;
  const auto t0 = std::chrono::steady_clock::now();
  r.C = optimize_free_vectors(run);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.X = cosine_similarity_matrix(r.C);
  const int G = run.groups;
  const double target = -1.0 / (G - 1);
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      if (i != j) r.max_offdiag_error = std::max(r.max_offdiag_error, std::abs(r.X.at(i, j) - target));
    }
  }
  double sq = 0.0;
  for (int d = 0; d < run.dim; ++d) {
    double m = 0.0;
    for (int i = 0; i < G; ++i) m += r.C.at(i, d) / G;
    sq += m * m;
  }
  r.mean_norm = std::sqrt(sq);
  return r;
}

CheckLine equiangular_check(const EquiangularOutcome& r, double tol, double mean_tol) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "max |cos - target| %.4g (<= %.3g), mean norm %.4g (< %.3g), %.2f s", r.max_offdiag_error, tol,
                r.mean_norm, mean_tol, r.seconds);
  return {"equiangular convergence", r.max_offdiag_error <= tol && r.mean_norm < mean_tol, buf};
}

std::string format_line(const CheckLine& c) { return std::string(c.passed ? "PASS" : "FAIL") + "  " + c.name + "  (" + c.detail + ")"; }

}  // namespace semsplit::checks
