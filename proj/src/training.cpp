// SPDX-License-Identifier: Apache-2.0
#include "semsplit/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "semsplit/channel.hpp"
#include "semsplit/error.hpp"
#include "semsplit/kernels.hpp"
#include "semsplit/loss.hpp"
#include "semsplit/ops.hpp"

namespace semsplit {

namespace fs = std::filesystem;
using nlohmann::json;

bool TrainState::operator==(const TrainState& o) const {
  return params == o.params && epoch == o.epoch && step == o.step && rng == o.rng &&
         optimizer.steps() == o.optimizer.steps() && optimizer.first_moment() == o.optimizer.first_moment() &&
         optimizer.second_moment() == o.optimizer.second_moment() && optimizer.config() == o.optimizer.config();
}

TrainState init_state(const TrainConfig& cfg) {
  TrainState st;
  st.rng.seed(cfg.seed);
  st.params = build_model(cfg.model, derive_seed(st.rng));
  AdamConfig adam;
  adam.lr = cfg.learning_rate;
  st.optimizer = Adam(adam);
  return st;
}

double sample_training_snr(Rng& rng, double low, double high) {
  if (!(low <= high)) throw InputError("SNR range low must not exceed high");
  if (low == high) return low;
  return std::uniform_real_distribution<double>(low, high)(rng);
}

namespace {

std::string diagnostic(const StepMetrics& m, const ParamStore& params, const Tensor& out) {
  std::ostringstream os;
  os << "non-finite loss at step " << m.step << " (epoch " << m.epoch << "): recon=" << m.recon << " repul=" << m.repul
     << " total=" << m.total << " snr_db=" << m.snr_db;
  int bad = 0;
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) {
      if (bad++ < 5) os << "\n  non-finite parameter " << name;
    }
  }
  os << "\n  non-finite parameter arrays: " << bad;
  std::size_t bad_out = 0;
  for (double v : out.vec()) bad_out += std::isfinite(v) ? 0 : 1;
  os << "\n  non-finite reconstruction values: " << bad_out << " of " << out.size();
  return os.str();
}

void clip_gradients(ParamStore& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.vec()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& [name, g] : grads)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
}

}  // namespace

StepMetrics train_step(const SourceBatch& batch, TrainState& st, const TrainConfig& cfg) {
  const int K = batch.users();
  if (K != cfg.batch_size) {
    throw InputError("batch has " + std::to_string(K) + " images, config expects " + std::to_string(cfg.batch_size));
  }
  const bool private_only = cfg.model.private_only;
  batch.validate(private_only ? 1 : cfg.groups);

  StepMetrics m;
  m.step = st.step + 1;
  m.epoch = st.epoch + 1;

  const Model model(st.params, true);
  const ag::Var x = ag::constant(batch.images);
  const ag::Var z = model.semantic_encode(x);
  const ag::Var p = model.private_encode(z);

  const std::uint64_t cluster_seed = derive_seed(st.rng);
  ag::Var c;
  if (private_only) {
    m.assignment = make_assignment(Tensor({K, 1}), std::vector<int>(static_cast<std::size_t>(K), 0));
  } else {
    m.assignment = cluster_users(p.value(), cfg.groups, cluster_seed, cfg.clustering);
    c = model.common_encode(z, m.assignment.groups);
  }

  m.snr_db = sample_training_snr(st.rng, cfg.snr_low_db, cfg.snr_high_db);
  ChannelRealization ch = sample_channel(cfg.channel, K, m.snr_db, st.rng);
  if (cfg.per_user_snr) {
    double mean = 0.0;
    for (int k = 0; k < K; ++k) {
      const double snr = sample_training_snr(st.rng, cfg.snr_low_db, cfg.snr_high_db);
      ch.noise_var[static_cast<std::size_t>(k)] = snr_to_noise_var(snr);
      mean += snr / K;
    }
    m.snr_db = mean;
  }

  ag::Var received_common;
  if (!private_only) {
    received_common = ag::transmit_common(cfg.detach_reconstruction ? ag::detach(c) : c, m.assignment, ch,
                                          cfg.channel.interference, st.rng);
  }
  const ag::Var received_private = ag::transmit_private(p, ch, cfg.channel.interference, st.rng);
  const ag::Var out = model.decode(received_common, received_private, batch.user_ids);

  const ag::Var recon = ag::charbonnier(x, out, cfg.loss.epsilon);
  const ag::Var repul = (!private_only && cfg.groups >= 2) ? ag::repulsion_loss(c, cfg.loss) : ag::constant(Tensor::scalar(0.0));
  const ag::Var total = ag::total_loss(recon, repul, cfg.loss.lambda_repul);
  m.recon = recon.value().item();
  m.repul = repul.value().item();
  m.total = total.value().item();
  for (const auto& g : m.assignment.groups) m.group_sizes.push_back(static_cast<int>(g.size()));
  if (!std::isfinite(m.total)) throw TrainingError(diagnostic(m, st.params.params, out.value()));

  ag::backward(total);
  ParamStore grads = model.gradients();
  if (cfg.grad_clip > 0.0) clip_gradients(grads, cfg.grad_clip);
  if (cfg.optimizer == OptimizerKind::Adam) {
    st.optimizer.step(st.params.params, grads);
  } else {
    for (auto& [name, value] : st.params.params) {
      const Tensor& g = grads.at(name);
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= cfg.learning_rate * g[i];
    }
  }
  st.step = m.step;
  return m;
}

// ---------------------------------------------------------------- metrics log

const std::vector<std::string>& MetricsLog::columns() {
  static const std::vector<std::string> cols = {"step", "epoch", "recon", "repul", "total", "snr_db", "group_sizes"};
  return cols;
}

MetricsLog::MetricsLog(const std::string& path, const TrainConfig& cfg, std::optional<std::int64_t> keep_through_step) {
  std::vector<std::string> kept;
  if (keep_through_step && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("step\t", 0) == 0) continue;
      if (std::stoll(line.substr(0, line.find('\t'))) <= *keep_through_step) kept.push_back(line);
    }
  }
  out_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
  if (!*out_) throw IoError("cannot write metrics log " + path);
  *out_ << "# semsplit-metrics " << kVersion << "\n";
  *out_ << "# config " << config_to_json(cfg, -1) << "\n";
  for (std::size_t i = 0; i < columns().size(); ++i) *out_ << (i ? "\t" : "") << columns()[i];
  *out_ << "\n";
  for (const auto& l : kept) *out_ << l << "\n";
  out_->flush();
}

MetricsLog::~MetricsLog() = default;

void MetricsLog::write(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld\t%d\t%.17g\t%.17g\t%.17g\t%.17g\t", static_cast<long long>(m.step), m.epoch, m.recon,
                m.repul, m.total, m.snr_db);
  *out_ << buf;
  for (std::size_t i = 0; i < m.group_sizes.size(); ++i) *out_ << (i ? "," : "") << m.group_sizes[i];
  *out_ << "\n";
  out_->flush();
  if (!*out_) throw IoError("failed writing metrics log");
}

std::vector<MetricsRecord> read_metrics_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics log " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# semsplit-metrics ", 0) != 0) throw IoError(path + " is not a metrics log");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step\t", 0) == 0) continue;
    std::istringstream ls(line);
    MetricsRecord r{};
    std::string sizes;
    if (!(ls >> r.step >> r.epoch >> r.recon >> r.repul >> r.total >> r.snr_db >> sizes)) {
      throw IoError("malformed metrics record: " + line);
    }
    std::istringstream ss(sizes);
    std::string tok;
    while (std::getline(ss, tok, ',')) r.group_sizes.push_back(std::stoi(tok));
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'S', 'P', 'L', 'I', 'T'};
constexpr std::uint32_t kByteOrder = 0x01020304u;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  if (n > (1ull << 32)) throw IoError("corrupt checkpoint string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated checkpoint");
  return s;
}

void put_array(std::ostream& os, const std::string& name, const Tensor& t) {
  put_string(os, name);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape()) put<std::int64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

std::string checkpoint_name(int epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch_%04d.ckpt", epoch);
  return buf;
}

void save_checkpoint(const std::string& path, const TrainConfig& cfg, const TrainState& st) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp);
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, kByteOrder);
    put_string(os, config_to_json(cfg, -1));
    const json meta = {{"epoch", st.epoch},
                       {"step", st.step},
                       {"model_seed", st.params.seed},
                       {"optimizer_steps", st.optimizer.steps()},
                       {"optimizer_lr", st.optimizer.config().lr},
                       {"optimizer_beta1", st.optimizer.config().beta1},
                       {"optimizer_beta2", st.optimizer.config().beta2},
                       {"optimizer_eps", st.optimizer.config().eps}};
    put_string(os, meta.dump());
    put_string(os, rng_state(st.rng));
    const auto& m = st.optimizer.first_moment();
    const auto& v = st.optimizer.second_moment();
    put<std::uint64_t>(os, st.params.params.size() + m.size() + v.size());
    for (const auto& [name, t] : st.params.params) put_array(os, "param/" + name, t);
    for (const auto& [name, t] : m) put_array(os, "adam_m/" + name, t);
    for (const auto& [name, t] : v) put_array(os, "adam_v/" + name, t);
    if (!os.flush()) throw IoError("failed writing checkpoint " + tmp);
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path + " is not a semsplit checkpoint");
  const auto version = take<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  if (take<std::uint32_t>(is) != kByteOrder) throw IoError("checkpoint byte order differs from this machine");

  Checkpoint ck;
  ck.config = config_from_json(take_string(is));
  json meta;
  try {
    meta = json::parse(take_string(is));
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  set_rng_state(ck.state.rng, take_string(is));
  ck.state.epoch = meta.at("epoch").get<int>();
  ck.state.step = meta.at("step").get<std::int64_t>();
  ck.state.params.config = ck.config.model;
  ck.state.params.seed = meta.at("model_seed").get<std::uint64_t>();
  AdamConfig adam;
  adam.lr = meta.at("optimizer_lr").get<double>();
  adam.beta1 = meta.at("optimizer_beta1").get<double>();
  adam.beta2 = meta.at("optimizer_beta2").get<double>();
  adam.eps = meta.at("optimizer_eps").get<double>();
  ck.state.optimizer = Adam(adam);

  ParamStore m, v;
  const auto count = take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = take_string(is);
    const auto rank = take<std::uint32_t>(is);
    if (rank > 8) throw IoError("corrupt checkpoint array rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto n = take<std::int64_t>(is);
      if (n < 0 || n > (1 << 30)) throw IoError("corrupt checkpoint dimension for " + name);
      shape.push_back(static_cast<int>(n));
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint array " + name);
    const auto slash = name.find('/');
    const std::string kind = name.substr(0, slash), key = name.substr(slash + 1);
    if (kind == "param") {
      ck.state.params.params.add(key, std::move(t));
    } else if (kind == "adam_m") {
      m.add(key, std::move(t));
    } else if (kind == "adam_v") {
      v.add(key, std::move(t));
    } else {
      throw IoError("unknown checkpoint array " + name);
    }
  }
  ck.state.optimizer.restore(meta.at("optimizer_steps").get<std::int64_t>(), std::move(m), std::move(v));

  const ParamStore expected = build_model(ck.config.model, 0).params;
  for (const auto& [name, t] : expected) {
    if (!ck.state.params.params.contains(name) || ck.state.params.params.at(name).shape() != t.shape()) {
      throw IoError("checkpoint parameters do not match its model config (" + name + ")");
    }
  }
  if (expected.size() != ck.state.params.params.size()) throw IoError("checkpoint holds unexpected parameter arrays");
  return ck;
}

// ---------------------------------------------------------------- loop

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const std::string& out_dir, const TrainOptions& opts) {
  cfg.validate();
  fs::create_directories(out_dir);
  {
    std::ofstream c(fs::path(out_dir) / "config.json");
    c << config_to_json(cfg) << "\n";
    if (!c) throw IoError("cannot write config snapshot in " + out_dir);
  }

  TrainResult result;
  TrainState& st = result.state;
  std::optional<std::int64_t> keep;
  if (opts.resume_from) {
    Checkpoint ck = load_checkpoint(*opts.resume_from);
    if (!(ck.config.model == cfg.model) || ck.config.batch_size != cfg.batch_size || ck.config.groups != cfg.groups) {
      throw ConfigError("checkpoint " + *opts.resume_from + " was trained with a different model or batch layout");
    }
    st = std::move(ck.state);
    keep = st.step;
  } else {
    st = init_state(cfg);
    save_checkpoint((fs::path(out_dir) / checkpoint_name(0)).string(), cfg, st);
  }

  const int K = cfg.batch_size;
  if (dataset.size() < K && st.epoch < cfg.epochs) {
    throw InputError("dataset has " + std::to_string(dataset.size()) + " images, fewer than one batch of " + std::to_string(K));
  }
  result.metrics_path = (fs::path(out_dir) / "metrics.tsv").string();
  MetricsLog log(result.metrics_path, cfg, keep);

  std::vector<int> user_ids(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) user_ids[static_cast<std::size_t>(k)] = k;

  for (int epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(dataset.size(), K, st.rng)) {
      const SourceBatch batch{dataset.gather(idx), user_ids};
      StepMetrics m;
      try {
        m = train_step(batch, st, cfg);
      } catch (const TrainingError& e) {
        std::ofstream dump(fs::path(out_dir) / "failure.txt");
        dump << e.what() << "\n";
        throw;
      }
      log.write(m);
      if (opts.on_step) opts.on_step(m);
    }
    st.epoch = epoch;
    if (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs) {
      save_checkpoint((fs::path(out_dir) / checkpoint_name(epoch)).string(), cfg, st);
    }
  }

  result.final_checkpoint = (fs::path(out_dir) / checkpoint_name(st.epoch)).string();
  if (!fs::exists(result.final_checkpoint)) save_checkpoint(result.final_checkpoint, cfg, st);
  return result;
}

Dataset load_training_set(const TrainConfig& cfg) {
  if (cfg.data.source == "synthetic") {
    if (cfg.data.train_size < 1) throw ConfigError("synthetic data needs data.train_size > 0");
    return make_synthetic(cfg.data.train_size, cfg.data.seed);
  }
  return load_cifar10(cfg.data.path, true, cfg.data.train_size);
}

Dataset load_eval_set(const TrainConfig& cfg) {
  if (cfg.data.source == "synthetic") {
    if (cfg.data.eval_size < 1) throw ConfigError("synthetic data needs data.eval_size > 0");
    return make_synthetic(cfg.data.eval_size, cfg.data.seed + 1);
  }
  return load_cifar10(cfg.data.path, false, cfg.data.eval_size);
}

void configure_runtime(const TrainConfig& cfg) {
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);
#if defined(__GLIBC__)
  // Keep freed tensor buffers in the heap instead of returning them to the kernel.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace semsplit
