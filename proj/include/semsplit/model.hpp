// SPDX-License-Identifier: Apache-2.0
#pragma once

// Semantic encoder, private/common feature encoders and semantic decoder.
//
// Layer plan (widths scale with base_width = w; w = 128 is the full-size network):
//
//   semantic encoder   stage(w,  encoder_blocks[0])      32x32 -> 16x16
//                      stage(2w, encoder_blocks[1])      16x16 ->  8x8   = z
//   private encoder    maxpool 4 -> dense L_p
//   common encoder     stage(4w, common_blocks) per member, maxpool 4 -> one token per member,
//                      transformer encoder (no positional encoding), mean over tokens, dense L_c
//   decoder            dense 4w, bilinear x4, then three transposed-conv (k4 s2) stages to
//                      2w, w and image_channels, each followed by ConvNeXt blocks
//
// A stage is a k4/s2 downsampling conv followed by ConvNeXt blocks
// (depthwise 7x7 -> 1x1 expand x4 -> ReLU -> GRN -> 1x1 project, residual).

#include <cstdint>
#include <string>
#include <vector>

#include "semsplit/autograd.hpp"
#include "semsplit/params.hpp"
#include "semsplit/tensor.hpp"

namespace semsplit {

struct ModelConfig {
  int base_width = 128;
  std::vector<int> encoder_blocks = {2, 3};
  int common_blocks = 3;
  std::vector<int> decoder_blocks = {3, 3, 2};
  int private_dim = 1638;  // L_p
  int common_dim = 410;    // L_c
  int transformer_layers = 2;
  int transformer_heads = 4;
  int ffn_mult = 4;
  bool shared_decoder = true;
  /// Ablation without group common features: common encoder absent, common_dim = 0.
  bool private_only = false;
  int num_users = 50;  // decoder count when shared_decoder is false
  int image_channels = 3;
  int image_size = 32;

  int transformer_width() const { return 4 * base_width; }
  int semantic_channels() const { return 2 * base_width; }
  int semantic_size() const { return image_size / 4; }
  int decoder_input_dim() const { return common_dim + private_dim; }

  /// Throws ConfigError on inconsistent dimensions.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Split of the per-image real feature budget between common and private parts.
/// `symbols` complex channel uses carry 2*symbols reals; the common share is
/// rounded to whole complex symbols.
struct FeatureSplit {
  int common_dim;
  int private_dim;
};
FeatureSplit split_feature_budget(int symbols, double common_ratio);

/// Trainable state of the four networks, named by owner:
/// "beta/" semantic encoder, "theta_p/" private encoder, "theta_c/" common encoder, "phi/" decoder(s).
struct ModelParams {
  ModelConfig config;
  std::uint64_t seed = 0;
  ParamStore params;

  bool operator==(const ModelParams&) const = default;
};

ModelParams build_model(const ModelConfig& config, std::uint64_t seed);

struct SourceBatch {
  Tensor images;              // [K, C, H, W], values in [0, 1]
  std::vector<int> user_ids;  // K entries

  int users() const { return images.rank() == 4 ? images.dim(0) : 0; }
  /// Checks shape, value range and divisibility by `groups` (InputError).
  void validate(int groups) const;
};

struct SemanticTensor {
  Tensor z;  // [channels, h, w]
};

struct PrivateFeature {
  std::vector<double> p;
};

struct CommonFeature {
  std::vector<double> c;
  int group_id = 0;
};

/// Batched, differentiable forward passes. Holds a binding of the parameter
/// store; gradients() returns what backward() accumulated on it.
class Model {
 public:
  Model(const ModelParams& params, bool trainable);

  const ModelConfig& config() const { return params_->config; }

  /// [K,C,H,W] -> [K, 2w, H/4, W/4]
  ag::Var semantic_encode(const ag::Var& images) const;
  /// [K, 2w, H/4, W/4] -> [K, L_p]
  ag::Var private_encode(const ag::Var& z) const;
  /// One member token per user: [K, 2w, H/4, W/4] -> [K, 4w]
  ag::Var common_tokens(const ag::Var& z) const;
  /// Transformer aggregation of a group's tokens [n, 4w] -> [1, L_c].
  ag::Var aggregate_group(const ag::Var& tokens) const;
  /// [K, ...] semantic tensors and a partition of rows into groups -> [G, L_c]
  ag::Var common_encode(const ag::Var& z, const std::vector<std::vector<int>>& groups) const;
  /// CONCAT[c, p] per row -> reconstructions [K, C, H, W]. `common` may be undefined
  /// for private-only models. user_ids select decoders when they are per-user.
  ag::Var decode(const ag::Var& common, const ag::Var& priv, const std::vector<int>& user_ids) const;

  ParamStore gradients() const { return binding_.gradients(); }

 private:
  ag::Var decode_with(const std::string& prefix, const ag::Var& features) const;

  const ModelParams* params_;
  ParamBinding binding_;
};

// Per-user value-level wrappers.
std::vector<SemanticTensor> semantic_encode(const SourceBatch& batch, const ModelParams& params);
PrivateFeature private_encode(const SemanticTensor& z, const ModelParams& params);
CommonFeature common_encode(const std::vector<SemanticTensor>& group, const ModelParams& params, int group_id = 0);
Tensor semantic_decode(const CommonFeature& c, const PrivateFeature& p, const ModelParams& params, int user_id);

/// Decoder parameter prefix for a user ("phi/shared/" or "phi/user<k>/").
std::string decoder_prefix(const ModelConfig& config, int user_id);

}  // namespace semsplit
