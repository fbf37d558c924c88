// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semsplit/clustering.hpp"
#include "semsplit/config.hpp"
#include "semsplit/dataset.hpp"
#include "semsplit/model.hpp"
#include "semsplit/optim.hpp"
#include "semsplit/rng.hpp"

namespace semsplit {

struct TrainState {
  ModelParams params;
  Adam optimizer;
  int epoch = 0;           // completed epochs
  std::int64_t step = 0;   // completed steps
  Rng rng;

  bool operator==(const TrainState& other) const;
};

struct StepMetrics {
  std::int64_t step = 0;
  int epoch = 0;
  double recon = 0.0;
  double repul = 0.0;
  double total = 0.0;
  double snr_db = 0.0;
  std::vector<int> group_sizes;
  GroupAssignment assignment;
};

/// Fresh parameters and optimizer; the engine is seeded from cfg.seed.
TrainState init_state(const TrainConfig& cfg);

/// Uniform draw in [low, high].
double sample_training_snr(Rng& rng, double low, double high);

/// One joint update: encode, cluster, transmit, decode, loss, optimizer step.
/// Throws TrainingError if the loss is not finite.
StepMetrics train_step(const SourceBatch& batch, TrainState& state, const TrainConfig& cfg);

/// Line-oriented step log. Header: a "# semsplit-metrics <version>" line, a
/// "# config <json>" line, then tab-separated column names.
class MetricsLog {
 public:
  static constexpr int kVersion = 1;
  static const std::vector<std::string>& columns();

  /// Opens `path` for writing. When `keep_through_step` is set the existing
  /// file is kept up to and including that step and new records are appended.
  MetricsLog(const std::string& path, const TrainConfig& cfg, std::optional<std::int64_t> keep_through_step = {});
  ~MetricsLog();
  MetricsLog(const MetricsLog&) = delete;
  MetricsLog& operator=(const MetricsLog&) = delete;

  void write(const StepMetrics& m);

 private:
  std::unique_ptr<std::ofstream> out_;
};

struct MetricsRecord {
  std::int64_t step;
  int epoch;
  double recon, repul, total, snr_db;
  std::vector<int> group_sizes;
};

/// Parses a metrics log written by MetricsLog.
std::vector<MetricsRecord> read_metrics_log(const std::string& path);

// Checkpoint file: magic "SEMSPLIT", u32 format version, u32 byte-order mark,
// then length-prefixed UTF-8 sections (config JSON, state JSON, engine state)
// and a count of named float64 arrays, each stored as name, rank, dims, data.
// Arrays are "param/<name>", "adam_m/<name>" and "adam_v/<name>".
struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TrainConfig& cfg, const TrainState& state);
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_name(int epoch);

struct TrainOptions {
  std::optional<std::string> resume_from;
  /// Called after every step (progress reporting).
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  std::string final_checkpoint;
  std::string metrics_path;
  TrainState state;
};

/// Full loop over `dataset` writing checkpoints, metrics.tsv and config.json under out_dir.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const std::string& out_dir, const TrainOptions& opts = {});

/// Training images for a config (synthetic generator or CIFAR-10 files).
Dataset load_training_set(const TrainConfig& cfg);
/// Held-out images for evaluation.
Dataset load_eval_set(const TrainConfig& cfg);

/// Applies cfg.threads and process-wide allocator settings for large tensors.
void configure_runtime(const TrainConfig& cfg);

}  // namespace semsplit
