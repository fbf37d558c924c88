// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "semsplit/channel.hpp"
#include "semsplit/config.hpp"
#include "semsplit/dataset.hpp"
#include "semsplit/training.hpp"

namespace semsplit {

// ---------------------------------------------------------------- metrics

constexpr double kPsnrCapDb = 100.0;

/// PSNR with peak 1 after clamping both inputs to [0, 1]; zero error gives the cap.
double psnr(const Tensor& s, const Tensor& s_hat);
/// One PSNR per leading-dimension entry.
std::vector<double> psnr_per_image(const Tensor& s, const Tensor& s_hat);

/// Plugin interface for perceptual features: images [N, 3, H, W] in [0, 1]
/// to one activation tensor per designated layer.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor> features(const Tensor& images) const = 0;
  virtual std::string name() const = 0;
};

/// Stack of 3x3-style conv + ReLU layers with optional max pooling, reading
/// activations at the `taps` layer indices. Loadable from JSON:
///   {"name": ..., "input_mean": [3], "input_std": [3], "taps": [i, ...],
///    "layers": [{"weight_shape": [out, in, k, k], "weight": [...], "bias": [...],
///                "stride": s, "pad": p, "pool": 0|2}, ...]}
/// which also fits converted VGG-style weights.
class ConvFeatureNet : public FeatureExtractor {
 public:
  struct Layer {
    Tensor weight;  // [out, in, k, k]
    Tensor bias;    // [out]
    int stride = 1;
    int pad = 1;
    int pool = 0;  // max-pool kernel after ReLU, 0 for none
  };

  ConvFeatureNet(std::string name, std::vector<Layer> layers, std::vector<int> taps, std::vector<double> mean = {0, 0, 0},
                 std::vector<double> std = {1, 1, 1});

  /// The built-in extractor: three conv layers (16, 32, 64 channels; the last
  /// two with stride 2) with weights drawn from a fixed seed, tapped after every layer.
  static std::shared_ptr<ConvFeatureNet> builtin();
  static std::shared_ptr<ConvFeatureNet> load(const std::string& path);
  void save(const std::string& path) const;

  std::vector<Tensor> features(const Tensor& images) const override;
  std::string name() const override { return name_; }
  const std::vector<int>& taps() const { return taps_; }

 private:
  std::string name_;
  std::vector<Layer> layers_;
  std::vector<int> taps_;
  std::vector<double> mean_, std_;
};

/// Mean over designated layers of the mean squared activation difference.
/// Throws ConfigError when `net` is null.
double perceptual_loss(const Tensor& s, const Tensor& s_hat, const FeatureExtractor* net);

// ---------------------------------------------------------------- tables

struct MetricsRow {
  std::string channel;
  double snr_db = 0.0;
  double psnr_db = 0.0;
  double perceptual = 0.0;
  int n_images = 0;
  std::uint64_t seed = 0;
  bool operator==(const MetricsRow&) const = default;
};

/// Header line "# semsplit-metrics-table <version>", a column line, then one row per record.
struct MetricsTable {
  static constexpr int kVersion = 1;
  std::vector<MetricsRow> rows;
  bool operator==(const MetricsTable&) const = default;

  /// Mean over seeds of the rows matching (channel, snr).
  double mean_psnr(double snr_db) const;
  double mean_perceptual(double snr_db) const;
};

void write_metrics_table(const std::string& path, const MetricsTable& table);
MetricsTable read_metrics_table(const std::string& path);

// ---------------------------------------------------------------- evaluation

struct EvalOptions {
  std::vector<double> snr_grid = {0, 6, 12, 18};
  ChannelConfig channel;
  std::vector<std::uint64_t> seeds = {0};
  /// Perceptual feature extractor; the built-in net when null.
  std::shared_ptr<const FeatureExtractor> perceptual;
};

/// Reconstructions of one batch through the full pipeline at a given SNR.
/// Randomness (clustering seed, fading, noise) comes from `rng`.
Tensor reconstruct(const Checkpoint& ck, const Tensor& images, double snr_db, const ChannelConfig& channel, Rng& rng);

/// SNR sweep. Each (snr, seed) cell restarts an engine from `seed`, so every SNR
/// point of a seed sees the same fading draws. Uses whole batches of K images.
MetricsTable evaluate(const Checkpoint& ck, const Dataset& images, const EvalOptions& opts);
MetricsTable evaluate(const std::string& checkpoint_path, const Dataset& images, const EvalOptions& opts);

/// Trains the private-only variant of `cfg` (all symbols to private features)
/// under the same protocol and evaluates it.
MetricsTable private_only_ablation(TrainConfig cfg, const Dataset& train_set, const Dataset& eval_set,
                                   const std::string& out_dir, const EvalOptions& opts);

// ---------------------------------------------------------------- latent diagnostics

struct SimilarityReport {
  Tensor X;  // [G, G] cosine similarity of group-mean common features
  double deviation = 0.0;  // max_{i != j} |X_ij - T_ij|
};

/// Report for given group feature rows [G, L].
SimilarityReport similarity_from_features(const Tensor& group_features);
/// Mean common feature per group index over all batches of `images`.
SimilarityReport similarity_report(const Checkpoint& ck, const Dataset& images, std::uint64_t seed = 0);

struct EmbeddingRecord {
  int group_id = 0;
  int epoch = 0;
  int batch = 0;
  std::vector<double> values;
  bool operator==(const EmbeddingRecord&) const = default;
};

/// Writes one record per (batch, group): header "# semsplit-embeddings 1",
/// column line "group_id\tepoch\tbatch\tdim\tvalues", values comma-separated
/// with 17 significant digits. Returns the records written.
std::vector<EmbeddingRecord> export_embeddings(const Checkpoint& ck, const Dataset& images, const std::string& out_file,
                                               std::uint64_t seed = 0);
std::vector<EmbeddingRecord> read_embeddings(const std::string& path);

// ---------------------------------------------------------------- plots

struct PlotSeries {
  std::string label;
  MetricsTable table;
};

/// Line chart of mean PSNR ("psnr") or perceptual loss ("perceptual") versus SNR as SVG.
std::string plot_svg(const std::vector<PlotSeries>& series, const std::string& metric, const std::string& title);

}  // namespace semsplit
