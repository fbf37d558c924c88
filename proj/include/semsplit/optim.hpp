// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "semsplit/params.hpp"

namespace semsplit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

/// Adam with bias correction. Moment buffers mirror the parameter names.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Updates every array in `params` that has an entry in `grads`.
  void step(ParamStore& params, const ParamStore& grads);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }
  const ParamStore& first_moment() const { return m_; }
  const ParamStore& second_moment() const { return v_; }
  /// Restores optimizer state from a checkpoint.
  void restore(std::int64_t steps, ParamStore m, ParamStore v);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  ParamStore m_, v_;
};

}  // namespace semsplit
