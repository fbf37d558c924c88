// SPDX-License-Identifier: Apache-2.0
#include "semsplit/optim.hpp"

#include <cmath>

#include "semsplit/error.hpp"

namespace semsplit {

void Adam::step(ParamStore& params, const ParamStore& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, value] : params) {
    if (!grads.contains(name)) continue;
    const Tensor& g = grads.at(name);
    if (g.shape() != value.shape()) throw InputError("gradient shape mismatch for " + name);
    if (!m_.contains(name)) {
      m_.add(name, Tensor(value.shape()));
      v_.add(name, Tensor(value.shape()));
    }
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      value[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t steps, ParamStore m, ParamStore v) {
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace semsplit
