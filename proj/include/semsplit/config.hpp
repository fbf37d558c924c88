// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "semsplit/channel.hpp"
#include "semsplit/clustering.hpp"
#include "semsplit/loss.hpp"
#include "semsplit/model.hpp"

namespace semsplit {

enum class OptimizerKind { Adam, SGD };

struct DataConfig {
  std::string source = "cifar10";  // "cifar10" or "synthetic"
  std::string path = "data/cifar-10-batches-bin";
  int train_size = 0;  // 0 = everything available
  int eval_size = 0;
  std::uint64_t seed = 1;  // synthetic generator seed (evaluation images use seed + 1)
  bool operator==(const DataConfig&) const = default;
};

/// Complete experiment description. Defaults reproduce the full-size setup:
/// 1024 complex symbols per image, common ratio 0.2, 50 users in 10 groups,
/// Adam at 1e-4 for 1000 epochs, SNR drawn from [12, 18] dB on AWGN.
struct TrainConfig {
  ModelConfig model;
  int symbols = 1024;
  double common_ratio = 0.2;

  int epochs = 1000;
  int batch_size = 50;
  int groups = 10;
  double learning_rate = 1e-4;
  double snr_low_db = 12.0;
  double snr_high_db = 18.0;
  bool per_user_snr = false;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  bool detach_reconstruction = false;

  LossWeights loss;
  ChannelConfig channel;
  ClusterOptions clustering;
  DataConfig data;

  std::uint64_t seed = 0;
  int checkpoint_interval = 50;  // epochs
  int threads = 0;               // 0 = OpenMP default

  /// Sets model.common_dim / private_dim from symbols, common_ratio and private_only,
  /// and model.num_users from batch_size.
  void resolve();
  /// Throws ConfigError on any inconsistency.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

std::string to_string(OptimizerKind k);

/// JSON text of the full configuration.
std::string config_to_json(const TrainConfig& cfg, int indent = 2);
/// Parses JSON; missing keys keep their defaults, unknown keys are errors.
/// The result is resolved and validated.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::string& path);

}  // namespace semsplit
