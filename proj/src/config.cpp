// SPDX-License-Identifier: Apache-2.0
#include "semsplit/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "semsplit/error.hpp"

namespace semsplit {

using nlohmann::json;

namespace {

// Reads keys of one JSON object, rejecting unknown names.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where_);
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::SGD;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

}  // namespace

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

void TrainConfig::resolve() {
  if (model.private_only) {
    model.common_dim = 0;
    model.private_dim = 2 * symbols;
  } else {
    const FeatureSplit split = split_feature_budget(symbols, common_ratio);
    model.common_dim = split.common_dim;
    model.private_dim = split.private_dim;
  }
  model.num_users = batch_size;
}

void TrainConfig::validate() const {
  model.validate();
  if (symbols < 1) throw ConfigError("symbols must be positive");
  if (!(common_ratio >= 0.0 && common_ratio < 1.0)) throw ConfigError("common_ratio must lie in [0, 1)");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (groups < 1 || batch_size % groups != 0) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " is not divisible by groups " + std::to_string(groups));
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and non-negative");
  if (!std::isfinite(snr_low_db) || !std::isfinite(snr_high_db) || snr_low_db > snr_high_db) {
    throw ConfigError("SNR range must be finite with low <= high");
  }
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be positive");
  if (threads < 0) throw ConfigError("threads must be non-negative");
  loss.validate();
  if (channel.model == ChannelModel::Rician && !(channel.rician_r > 0.0)) throw ConfigError("Rician factor must be positive");
  if (clustering.max_iters < 1) throw ConfigError("clustering.max_iters must be positive");
  if (data.source != "cifar10" && data.source != "synthetic") {
    throw ConfigError("data.source must be cifar10 or synthetic, got '" + data.source + "'");
  }
  if (data.train_size < 0 || data.eval_size < 0) throw ConfigError("data sizes must be non-negative");
  if (!model.private_only && model.common_dim % 2 != 0) throw ConfigError("common_dim must be even");
  if (model.private_dim % 2 != 0) throw ConfigError("private_dim must be even");
}

std::string config_to_json(const TrainConfig& c, int indent) {
  json j;
  j["model"] = {
      {"base_width", c.model.base_width},
      {"encoder_blocks", c.model.encoder_blocks},
      {"common_blocks", c.model.common_blocks},
      {"decoder_blocks", c.model.decoder_blocks},
      {"transformer_layers", c.model.transformer_layers},
      {"transformer_heads", c.model.transformer_heads},
      {"ffn_mult", c.model.ffn_mult},
      {"shared_decoder", c.model.shared_decoder},
      {"private_only", c.model.private_only},
      {"image_channels", c.model.image_channels},
      {"image_size", c.model.image_size},
      {"common_dim", c.model.common_dim},
      {"private_dim", c.model.private_dim},
  };
  j["symbols"] = c.symbols;
  j["common_ratio"] = c.common_ratio;
  j["train"] = {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"groups", c.groups},
      {"learning_rate", c.learning_rate},
      {"snr_low_db", c.snr_low_db},
      {"snr_high_db", c.snr_high_db},
      {"per_user_snr", c.per_user_snr},
      {"optimizer", to_string(c.optimizer)},
      {"grad_clip", c.grad_clip},
      {"detach_reconstruction", c.detach_reconstruction},
      {"seed", c.seed},
      {"checkpoint_interval", c.checkpoint_interval},
      {"threads", c.threads},
  };
  j["loss"] = {{"lambda_repul", c.loss.lambda_repul}, {"lambda_center", c.loss.lambda_center}, {"epsilon", c.loss.epsilon}};
  j["channel"] = {{"model", to_string(c.channel.model)}, {"rician_r", c.channel.rician_r}, {"interference", c.channel.interference}};
  j["clustering"] = {{"max_iters", c.clustering.max_iters}, {"tolerance", c.clustering.tolerance}, {"normalize", c.clustering.normalize}};
  j["data"] = {{"source", c.data.source}, {"path", c.data.path}, {"train_size", c.data.train_size}, {"eval_size", c.data.eval_size}, {"seed", c.data.seed}};
  return j.dump(indent);
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  TrainConfig c;
  {
    Reader top(j, "config");
    top.get("symbols", c.symbols);
    top.get("common_ratio", c.common_ratio);
    if (const json* m = top.child("model")) {
      Reader r(*m, "model");
      r.get("base_width", c.model.base_width);
      r.get("encoder_blocks", c.model.encoder_blocks);
      r.get("common_blocks", c.model.common_blocks);
      r.get("decoder_blocks", c.model.decoder_blocks);
      r.get("transformer_layers", c.model.transformer_layers);
      r.get("transformer_heads", c.model.transformer_heads);
      r.get("ffn_mult", c.model.ffn_mult);
      r.get("shared_decoder", c.model.shared_decoder);
      r.get("private_only", c.model.private_only);
      r.get("image_channels", c.model.image_channels);
      r.get("image_size", c.model.image_size);
      // Derived fields, recomputed by resolve().
      int ignored = 0;
      r.get("common_dim", ignored);
      r.get("private_dim", ignored);
    }
    if (const json* t = top.child("train")) {
      Reader r(*t, "train");
      r.get("epochs", c.epochs);
      r.get("batch_size", c.batch_size);
      r.get("groups", c.groups);
      r.get("learning_rate", c.learning_rate);
      r.get("snr_low_db", c.snr_low_db);
      r.get("snr_high_db", c.snr_high_db);
      r.get("per_user_snr", c.per_user_snr);
      std::string opt = to_string(c.optimizer);
      r.get("optimizer", opt);
      c.optimizer = parse_optimizer(opt);
      r.get("grad_clip", c.grad_clip);
      r.get("detach_reconstruction", c.detach_reconstruction);
      r.get("seed", c.seed);
      r.get("checkpoint_interval", c.checkpoint_interval);
      r.get("threads", c.threads);
    }
    if (const json* l = top.child("loss")) {
      Reader r(*l, "loss");
      r.get("lambda_repul", c.loss.lambda_repul);
      r.get("lambda_center", c.loss.lambda_center);
      r.get("epsilon", c.loss.epsilon);
    }
    if (const json* ch = top.child("channel")) {
      Reader r(*ch, "channel");
      std::string model = to_string(c.channel.model);
      r.get("model", model);
      c.channel.model = parse_channel_model(model);
      r.get("rician_r", c.channel.rician_r);
      r.get("interference", c.channel.interference);
    }
    if (const json* cl = top.child("clustering")) {
      Reader r(*cl, "clustering");
      r.get("max_iters", c.clustering.max_iters);
      r.get("tolerance", c.clustering.tolerance);
      r.get("normalize", c.clustering.normalize);
    }
    if (const json* d = top.child("data")) {
      Reader r(*d, "data");
      r.get("source", c.data.source);
      r.get("path", c.data.path);
      r.get("train_size", c.data.train_size);
      r.get("eval_size", c.data.eval_size);
      r.get("seed", c.data.seed);
    }
  }
  c.resolve();
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace semsplit
