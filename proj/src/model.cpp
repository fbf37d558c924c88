// SPDX-License-Identifier: Apache-2.0
#include "semsplit/model.hpp"

#include <cmath>
#include <random>

#include "semsplit/error.hpp"
#include "semsplit/ops.hpp"
#include "semsplit/rng.hpp"

namespace semsplit {

namespace {

// ---------------------------------------------------------------- init

class Init {
 public:
  Init(ParamStore& store, Rng& rng) : store_(store), rng_(rng) {}

  void uniform(const std::string& name, Shape shape, double bound) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng_);
    store_.add(name, std::move(t));
  }
  void constant(const std::string& name, Shape shape, double v) { store_.add(name, Tensor(std::move(shape), v)); }

  // Uniform(+-1/sqrt(fan_in)) for weights and biases.
  void conv(const std::string& p, int out, int in, int k) {
    const double b = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    uniform(p + "weight", {out, in, k, k}, b);
    uniform(p + "bias", {out}, b);
  }
  void depthwise(const std::string& p, int ch, int k) {
    const double b = 1.0 / std::sqrt(static_cast<double>(k * k));
    uniform(p + "weight", {ch, 1, k, k}, b);
    uniform(p + "bias", {ch}, b);
  }
  void conv_transpose(const std::string& p, int in, int out, int k) {
    const double b = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    uniform(p + "weight", {in, out, k, k}, b);
    uniform(p + "bias", {out}, b);
  }
  void linear(const std::string& p, int out, int in) {
    const double b = 1.0 / std::sqrt(static_cast<double>(in));
    uniform(p + "weight", {out, in}, b);
    uniform(p + "bias", {out}, b);
  }
  void layer_norm(const std::string& p, int d) {
    constant(p + "gamma", {d}, 1.0);
    constant(p + "beta", {d}, 0.0);
  }
  // Zero affine parameters make a fresh GRN the identity map.
  void grn(const std::string& p, int ch) {
    constant(p + "gamma", {ch}, 0.0);
    constant(p + "beta", {ch}, 0.0);
  }

 private:
  ParamStore& store_;
  Rng& rng_;
};

constexpr int kDownKernel = 4;
constexpr int kDepthwiseKernel = 7;
constexpr int kPoolKernel = 4;
constexpr int kUpsampleScale = 4;

void init_block(Init& in, const std::string& p, int d) {
  in.depthwise(p + "dw/", d, kDepthwiseKernel);
  in.conv(p + "pw1/", 4 * d, d, 1);
  in.grn(p + "grn/", 4 * d);
  in.conv(p + "pw2/", d, 4 * d, 1);
}

void init_stage(Init& in, const std::string& p, int in_ch, int d, int blocks) {
  in.conv(p + "down/", d, in_ch, kDownKernel);
  for (int b = 0; b < blocks; ++b) init_block(in, p + "block" + std::to_string(b) + "/", d);
}

void init_transformer_layer(Init& in, const std::string& p, int d, int ffn) {
  in.linear(p + "q/", d, d);
  in.linear(p + "k/", d, d);
  in.linear(p + "v/", d, d);
  in.linear(p + "o/", d, d);
  in.layer_norm(p + "ln1/", d);
  in.linear(p + "ff1/", ffn, d);
  in.linear(p + "ff2/", d, ffn);
  in.layer_norm(p + "ln2/", d);
}

void init_decoder(Init& in, const std::string& p, const ModelConfig& c) {
  const int w = c.base_width;
  in.linear(p + "fc/", 4 * w, c.decoder_input_dim());
  const int widths[] = {4 * w, 2 * w, w, c.image_channels};
  for (int s = 0; s < 3; ++s) {
    const std::string sp = p + "up" + std::to_string(s) + "/";
    in.conv_transpose(sp + "tconv/", widths[s], widths[s + 1], kDownKernel);
    for (int b = 0; b < c.decoder_blocks[s]; ++b) init_block(in, sp + "block" + std::to_string(b) + "/", widths[s + 1]);
  }
}

// ---------------------------------------------------------------- forward helpers

ag::Var block(const ParamBinding& B, const std::string& p, const ag::Var& x) {
  ag::Var h = ag::depthwise_conv2d(x, B(p + "dw/weight"), B(p + "dw/bias"), 1, kDepthwiseKernel / 2);
  h = ag::relu(ag::conv2d(h, B(p + "pw1/weight"), B(p + "pw1/bias"), 1, 0));
  h = ag::grn(h, B(p + "grn/gamma"), B(p + "grn/beta"));
  h = ag::conv2d(h, B(p + "pw2/weight"), B(p + "pw2/bias"), 1, 0);
  return ag::add(x, h);
}

ag::Var blocks(const ParamBinding& B, const std::string& p, ag::Var x, int count) {
  for (int b = 0; b < count; ++b) x = block(B, p + "block" + std::to_string(b) + "/", x);
  return x;
}

ag::Var stage(const ParamBinding& B, const std::string& p, const ag::Var& x, int count) {
  ag::Var h = ag::relu(ag::conv2d(x, B(p + "down/weight"), B(p + "down/bias"), 2, 1));
  return blocks(B, p, h, count);
}

ag::Var dense(const ParamBinding& B, const std::string& p, const ag::Var& x) {
  return ag::linear(x, B(p + "weight"), B(p + "bias"));
}

ag::Var transformer_layer(const ParamBinding& B, const std::string& p, const ag::Var& x, int heads) {
  const int d = x.dim(1);
  const int dh = d / heads;
  ag::Var q = dense(B, p + "q/", x), k = dense(B, p + "k/", x), v = dense(B, p + "v/", x);
  std::vector<ag::Var> outs;
  for (int h = 0; h < heads; ++h) {
    ag::Var qh = ag::slice_cols(q, h * dh, (h + 1) * dh);
    ag::Var kh = ag::slice_cols(k, h * dh, (h + 1) * dh);
    ag::Var vh = ag::slice_cols(v, h * dh, (h + 1) * dh);
    ag::Var att = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), 1.0 / std::sqrt(double(dh))));
    outs.push_back(ag::matmul(att, vh));
  }
  ag::Var a = dense(B, p + "o/", ag::concat_cols(outs));
  ag::Var h1 = ag::layer_norm(ag::add(x, a), B(p + "ln1/gamma"), B(p + "ln1/beta"));
  ag::Var f = dense(B, p + "ff2/", ag::relu(dense(B, p + "ff1/", h1)));
  return ag::layer_norm(ag::add(h1, f), B(p + "ln2/gamma"), B(p + "ln2/beta"));
}

}  // namespace

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (base_width < 1) fail("base_width must be >= 1");
  if (encoder_blocks.size() != 2) fail("encoder_blocks needs 2 entries");
  if (decoder_blocks.size() != 3) fail("decoder_blocks needs 3 entries");
  for (int b : encoder_blocks) if (b < 0) fail("negative block count");
  for (int b : decoder_blocks) if (b < 0) fail("negative block count");
  if (common_blocks < 0) fail("negative block count");
  if (private_dim < 1) fail("private_dim (L_p) must be >= 1");
  if (private_only) {
    if (common_dim != 0) fail("private_only requires common_dim = 0");
  } else if (common_dim < 1) {
    fail("common_dim (L_c) must be >= 1");
  }
  if (transformer_layers < 0) fail("transformer_layers must be >= 0");
  if (transformer_heads < 1 || transformer_width() % transformer_heads != 0) {
    fail("transformer_heads (" + std::to_string(transformer_heads) + ") must divide transformer width " +
         std::to_string(transformer_width()));
  }
  if (ffn_mult < 1) fail("ffn_mult must be >= 1");
  if (num_users < 1) fail("num_users must be >= 1");
  if (image_channels < 1) fail("image_channels must be >= 1");
  if (image_size != 32) fail("image_size must be 32 (three stride-2 stages and a x4 upsample)");
}

FeatureSplit split_feature_budget(int symbols, double common_ratio) {
  if (symbols < 1) throw ConfigError("symbol budget must be >= 1");
  if (!(common_ratio >= 0.0 && common_ratio < 1.0)) throw ConfigError("common ratio must lie in [0, 1)");
  const int common_symbols = static_cast<int>(std::lround(common_ratio * symbols));
  return FeatureSplit{2 * common_symbols, 2 * (symbols - common_symbols)};
}

std::string decoder_prefix(const ModelConfig& config, int user_id) {
  if (config.shared_decoder) return "phi/shared/";
  if (user_id < 0 || user_id >= config.num_users) {
    throw InputError("user id " + std::to_string(user_id) + " outside [0, " + std::to_string(config.num_users) + ")");
  }
  return "phi/user" + std::to_string(user_id) + "/";
}

ModelParams build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams mp;
  mp.config = config;
  mp.seed = seed;
  Rng rng(seed);
  Init in(mp.params, rng);
  const int w = config.base_width;

  init_stage(in, "beta/stage0/", config.image_channels, w, config.encoder_blocks[0]);
  init_stage(in, "beta/stage1/", w, 2 * w, config.encoder_blocks[1]);

  const int pooled = config.semantic_size() / kPoolKernel;
  in.linear("theta_p/fc/", config.private_dim, config.semantic_channels() * pooled * pooled);

  if (!config.private_only) {
    const int d = config.transformer_width();
    init_stage(in, "theta_c/stage/", 2 * w, d, config.common_blocks);
    for (int l = 0; l < config.transformer_layers; ++l) {
      init_transformer_layer(in, "theta_c/layer" + std::to_string(l) + "/", d, config.ffn_mult * d);
    }
    in.linear("theta_c/fc/", config.common_dim, d);
  }

  if (config.shared_decoder) {
    init_decoder(in, "phi/shared/", config);
  } else {
    for (int u = 0; u < config.num_users; ++u) init_decoder(in, decoder_prefix(config, u), config);
  }
  return mp;
}

// ---------------------------------------------------------------- batch

void SourceBatch::validate(int groups) const {
  require(images.rank() == 4, "source batch must be [K,C,H,W], got " + shape_str(images.shape()));
  const int k = images.dim(0);
  require(k > 0, "source batch is empty");
  require(static_cast<int>(user_ids.size()) == k, "user_ids must have one entry per image");
  require(groups >= 1 && k % groups == 0,
          "batch size " + std::to_string(k) + " not divisible by group count " + std::to_string(groups));
  for (double v : images.vec()) require(v >= 0.0 && v <= 1.0, "source values must lie in [0,1]");
}

// ---------------------------------------------------------------- Model

Model::Model(const ModelParams& params, bool trainable) : params_(&params), binding_(params.params, trainable) {
  params.config.validate();
}

ag::Var Model::semantic_encode(const ag::Var& images) const {
  const ModelConfig& c = config();
  require(images.value().rank() == 4 && images.dim(1) == c.image_channels && images.dim(2) == c.image_size &&
              images.dim(3) == c.image_size,
          "images " + shape_str(images.shape()) + " do not match configured " + std::to_string(c.image_channels) +
              "x" + std::to_string(c.image_size) + "x" + std::to_string(c.image_size));
  ag::Var h = stage(binding_, "beta/stage0/", images, c.encoder_blocks[0]);
  return stage(binding_, "beta/stage1/", h, c.encoder_blocks[1]);
}

ag::Var Model::private_encode(const ag::Var& z) const {
  const ModelConfig& c = config();
  require(z.value().rank() == 4 && z.dim(1) == c.semantic_channels() && z.dim(2) == c.semantic_size() &&
              z.dim(3) == c.semantic_size(),
          "semantic tensor " + shape_str(z.shape()) + " does not match the configured encoder");
  ag::Var pooled = ag::max_pool2d(z, kPoolKernel);
  ag::Var flat = ag::reshape(pooled, {z.dim(0), static_cast<int>(pooled.size() / z.dim(0))});
  return dense(binding_, "theta_p/fc/", flat);
}

ag::Var Model::common_tokens(const ag::Var& z) const {
  const ModelConfig& c = config();
  require(!c.private_only, "private-only model has no common encoder");
  require(z.value().rank() == 4 && z.dim(1) == c.semantic_channels() && z.dim(2) == c.semantic_size(),
          "semantic tensor " + shape_str(z.shape()) + " does not match the configured encoder");
  ag::Var h = stage(binding_, "theta_c/stage/", z, c.common_blocks);
  ag::Var pooled = ag::max_pool2d(h, kPoolKernel);
  return ag::reshape(pooled, {z.dim(0), c.transformer_width()});
}

ag::Var Model::aggregate_group(const ag::Var& tokens) const {
  require(tokens.dim(0) > 0, "common_encode: empty group");
  ag::Var x = tokens;
  for (int l = 0; l < config().transformer_layers; ++l) {
    x = transformer_layer(binding_, "theta_c/layer" + std::to_string(l) + "/", x, config().transformer_heads);
  }
  return dense(binding_, "theta_c/fc/", ag::mean_rows(x));
}

ag::Var Model::common_encode(const ag::Var& z, const std::vector<std::vector<int>>& groups) const {
  require(!groups.empty(), "common_encode: no groups");
  for (const auto& g : groups) require(!g.empty(), "common_encode: empty group");
  ag::Var tokens = common_tokens(z);
  std::vector<ag::Var> rows;
  rows.reserve(groups.size());
  for (const auto& g : groups) rows.push_back(aggregate_group(ag::gather0(tokens, g)));
  return ag::concat0(rows);
}

ag::Var Model::decode_with(const std::string& p, const ag::Var& features) const {
  const ModelConfig& c = config();
  const int n = features.dim(0);
  ag::Var h = ag::relu(dense(binding_, p + "fc/", features));
  h = ag::upsample_bilinear(ag::reshape(h, {n, 4 * c.base_width, 1, 1}), kUpsampleScale);
  for (int s = 0; s < 3; ++s) {
    const std::string sp = p + "up" + std::to_string(s) + "/";
    h = ag::relu(ag::conv_transpose2d(h, binding_(sp + "tconv/weight"), binding_(sp + "tconv/bias"), 2, 1));
    h = blocks(binding_, sp, h, c.decoder_blocks[s]);
  }
  return h;
}

ag::Var Model::decode(const ag::Var& common, const ag::Var& priv, const std::vector<int>& user_ids) const {
  const ModelConfig& c = config();
  require(priv.value().rank() == 2 && priv.dim(1) == c.private_dim,
          "private features must be [K, " + std::to_string(c.private_dim) + "], got " + shape_str(priv.shape()));
  const int k = priv.dim(0);
  require(static_cast<int>(user_ids.size()) == k, "decode: one user id per row required");
  ag::Var features = priv;
  if (!c.private_only) {
    require(common.defined() && common.value().rank() == 2 && common.dim(0) == k && common.dim(1) == c.common_dim,
            "common features must be [K, " + std::to_string(c.common_dim) + "]");
    features = ag::concat_cols({common, priv});
  }
  if (c.shared_decoder) return decode_with("phi/shared/", features);
  std::vector<ag::Var> outs;
  outs.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) outs.push_back(decode_with(decoder_prefix(c, user_ids[i]), ag::gather0(features, {i})));
  return ag::concat0(outs);
}

// ---------------------------------------------------------------- value wrappers

namespace {

Tensor row_of(const Tensor& t, int r) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  const std::size_t n = t.size() / t.dim(0);
  return Tensor(s, std::vector<double>(t.data() + r * n, t.data() + (r + 1) * n));
}

Tensor stack(const std::vector<SemanticTensor>& zs) {
  require(!zs.empty(), "empty group");
  Shape s{static_cast<int>(zs.size())};
  for (int d : zs[0].z.shape()) s.push_back(d);
  std::vector<double> data;
  for (const auto& z : zs) {
    require(z.z.shape() == zs[0].z.shape(), "group members have different shapes");
    data.insert(data.end(), z.z.vec().begin(), z.z.vec().end());
  }
  return Tensor(s, std::move(data));
}

}  // namespace

std::vector<SemanticTensor> semantic_encode(const SourceBatch& batch, const ModelParams& params) {
  batch.validate(1);
  Model m(params, false);
  Tensor z = m.semantic_encode(ag::constant(batch.images)).value();
  std::vector<SemanticTensor> out;
  for (int k = 0; k < z.dim(0); ++k) out.push_back({row_of(z, k)});
  return out;
}

PrivateFeature private_encode(const SemanticTensor& z, const ModelParams& params) {
  Model m(params, false);
  Tensor p = m.private_encode(ag::constant(stack({z}))).value();
  return {p.vec()};
}

CommonFeature common_encode(const std::vector<SemanticTensor>& group, const ModelParams& params, int group_id) {
  require(!group.empty(), "common_encode: empty group");
  Model m(params, false);
  std::vector<int> members(group.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i);
  Tensor c = m.common_encode(ag::constant(stack(group)), {members}).value();
  return {c.vec(), group_id};
}

Tensor semantic_decode(const CommonFeature& c, const PrivateFeature& p, const ModelParams& params, int user_id) {
  const ModelConfig& cfg = params.config;
  require(static_cast<int>(p.p.size()) == cfg.private_dim,
          "private feature length " + std::to_string(p.p.size()) + " != L_p " + std::to_string(cfg.private_dim));
  require(static_cast<int>(c.c.size()) == cfg.common_dim,
          "common feature length " + std::to_string(c.c.size()) + " != L_c " + std::to_string(cfg.common_dim));
  Model m(params, false);
  ag::Var common;
  if (!cfg.private_only) common = ag::constant(Tensor({1, cfg.common_dim}, c.c));
  Tensor out = m.decode(common, ag::constant(Tensor({1, cfg.private_dim}, p.p)), {user_id}).value();
  return row_of(out, 0);
}

}  // namespace semsplit
