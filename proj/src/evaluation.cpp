// SPDX-License-Identifier: Apache-2.0
#include "semsplit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "semsplit/error.hpp"
#include "semsplit/loss.hpp"
#include "semsplit/ops.hpp"

namespace semsplit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InputError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": bad number '" + s + "'");
  }
}

long long parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": bad integer '" + s + "'");
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<int> identity_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) ids[static_cast<std::size_t>(k)] = k;
  return ids;
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit_uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

// ---------------------------------------------------------------- metrics

double psnr(const Tensor& s, const Tensor& s_hat) {
  require_same_shape(s, s_hat, "psnr");
  if (s.size() == 0) throw InputError("psnr: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = clamp01(s[i]) - clamp01(s_hat[i]);
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(s.size()));
}

std::vector<double> psnr_per_image(const Tensor& s, const Tensor& s_hat) {
  require_same_shape(s, s_hat, "psnr");
  if (s.rank() < 2 || s.dim(0) == 0) throw InputError("psnr_per_image: expected a batch");
  const int n = s.dim(0);
  const std::size_t per = s.size() / static_cast<std::size_t>(n);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const std::size_t off = static_cast<std::size_t>(i) * per;
    for (std::size_t j = 0; j < per; ++j) {
      const double d = clamp01(s[off + j]) - clamp01(s_hat[off + j]);
      acc += d * d;
    }
    out[static_cast<std::size_t>(i)] = psnr_from_mse(acc / static_cast<double>(per));
  }
  return out;
}

ConvFeatureNet::ConvFeatureNet(std::string name, std::vector<Layer> layers, std::vector<int> taps, std::vector<double> mean,
                               std::vector<double> std)
    : name_(std::move(name)), layers_(std::move(layers)), taps_(std::move(taps)), mean_(std::move(mean)), std_(std::move(std)) {
  if (layers_.empty()) throw ConfigError("feature net '" + name_ + "' has no layers");
  if (taps_.empty()) throw ConfigError("feature net '" + name_ + "' has no tapped layers");
  const int n = static_cast<int>(layers_.size());
  for (int t : taps_) {
    if (t < 0 || t >= n) throw ConfigError("feature net tap " + std::to_string(t) + " outside [0, " + std::to_string(n) + ")");
  }
  int in_ch = layers_.front().weight.rank() == 4 ? layers_.front().weight.dim(1) : 0;
  if (static_cast<int>(mean_.size()) != in_ch || static_cast<int>(std_.size()) != in_ch) {
    throw ConfigError("feature net input_mean/input_std must have one entry per input channel");
  }
  for (double v : std_) {
    if (!(v > 0.0)) throw ConfigError("feature net input_std entries must be positive");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const std::string where = "feature net layer " + std::to_string(i);
    if (l.weight.rank() != 4) throw ConfigError(where + ": weight must be [out, in, k, k]");
    if (l.weight.dim(1) != in_ch) throw ConfigError(where + ": expects " + std::to_string(l.weight.dim(1)) + " input channels, got " + std::to_string(in_ch));
    if (l.weight.dim(2) != l.weight.dim(3)) throw ConfigError(where + ": kernel must be square");
    if (l.bias.size() != static_cast<std::size_t>(l.weight.dim(0))) throw ConfigError(where + ": bias length mismatch");
    if (l.stride < 1 || l.pad < 0 || l.pool < 0 || l.pool == 1) throw ConfigError(where + ": bad stride/pad/pool");
    in_ch = l.weight.dim(0);
  }
}

std::shared_ptr<ConvFeatureNet> ConvFeatureNet::builtin() {
  Rng rng(0x5e3a9c1d2b7f4e61ULL);
  const int widths[] = {16, 32, 64};
  const int strides[] = {1, 2, 2};
  std::vector<Layer> layers;
  int in_ch = 3;
  for (int i = 0; i < 3; ++i) {
    Layer l;
    const int out = widths[i];
    l.weight = Tensor({out, in_ch, 3, 3});
    const double bound = std::sqrt(6.0 / (in_ch * 9));
    for (std::size_t j = 0; j < l.weight.size(); ++j) l.weight[j] = (2.0 * unit_uniform(rng) - 1.0) * bound;
    l.bias = Tensor({out});
    l.stride = strides[i];
    l.pad = 1;
    layers.push_back(std::move(l));
    in_ch = out;
  }
  return std::make_shared<ConvFeatureNet>("builtin-conv3", std::move(layers), std::vector<int>{0, 1, 2},
                                          std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{0.25, 0.25, 0.25});
}

std::shared_ptr<ConvFeatureNet> ConvFeatureNet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature net " + path);
  json j;
  try {
    in >> j;
    std::vector<Layer> layers;
    for (const auto& lj : j.at("layers")) {
      Layer l;
      const auto shape = lj.at("weight_shape").get<std::vector<int>>();
      l.weight = Tensor(Shape(shape.begin(), shape.end()), lj.at("weight").get<std::vector<double>>());
      const auto bias = lj.at("bias").get<std::vector<double>>();
      l.bias = Tensor({static_cast<int>(bias.size())}, bias);
      l.stride = lj.value("stride", 1);
      l.pad = lj.value("pad", 1);
      l.pool = lj.value("pool", 0);
      layers.push_back(std::move(l));
    }
    return std::make_shared<ConvFeatureNet>(j.value("name", fs::path(path).stem().string()), std::move(layers),
                                            j.at("taps").get<std::vector<int>>(),
                                            j.value("input_mean", std::vector<double>{0, 0, 0}),
                                            j.value("input_std", std::vector<double>{1, 1, 1}));
  } catch (const json::exception& e) {
    throw ConfigError("feature net " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("feature net " + path + ": " + e.what());
  }
}

void ConvFeatureNet::save(const std::string& path) const {
  json j;
  j["name"] = name_;
  j["input_mean"] = mean_;
  j["input_std"] = std_;
  j["taps"] = taps_;
  j["layers"] = json::array();
  for (const Layer& l : layers_) {
    json lj;
    lj["weight_shape"] = l.weight.shape();
    lj["weight"] = l.weight.vec();
    lj["bias"] = l.bias.vec();
    lj["stride"] = l.stride;
    lj["pad"] = l.pad;
    lj["pool"] = l.pool;
    j["layers"].push_back(std::move(lj));
  }
  std::ofstream out(path);
  out << j.dump() << "\n";
  if (!out) throw IoError("cannot write feature net " + path);
}

std::vector<Tensor> ConvFeatureNet::features(const Tensor& images) const {
  const int in_ch = layers_.front().weight.dim(1);
  if (images.rank() != 4 || images.dim(1) != in_ch) {
    throw InputError("feature net expects [N, " + std::to_string(in_ch) + ", H, W], got " + shape_str(images.shape()));
  }
  Tensor x = images;
  const std::size_t plane = static_cast<std::size_t>(images.dim(2)) * images.dim(3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = (i / plane) % static_cast<std::size_t>(in_ch);
    x[i] = (clamp01(x[i]) - mean_[c]) / std_[c];
  }
  std::vector<Tensor> out;
  ag::Var h = ag::constant(std::move(x));
  std::set<int> taps(taps_.begin(), taps_.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    h = ag::relu(ag::conv2d(h, ag::constant(l.weight), ag::constant(l.bias), l.stride, l.pad));
    if (l.pool > 0) h = ag::max_pool2d(h, l.pool);
    if (taps.count(static_cast<int>(i))) out.push_back(h.value());
  }
  return out;
}

double perceptual_loss(const Tensor& s, const Tensor& s_hat, const FeatureExtractor* net) {
  if (net == nullptr) throw ConfigError("perceptual loss needs a feature extractor");
  require_same_shape(s, s_hat, "perceptual_loss");
  const std::vector<Tensor> fa = net->features(s);
  const std::vector<Tensor> fb = net->features(s_hat);
  if (fa.empty() || fa.size() != fb.size()) throw ConfigError("feature extractor '" + net->name() + "' returned no layers");
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    double acc = 0.0;
    for (std::size_t i = 0; i < fa[l].size(); ++i) {
      const double d = fa[l][i] - fb[l][i];
      acc += d * d;
    }
    total += acc / static_cast<double>(fa[l].size());
  }
  return total / static_cast<double>(fa.size());
}

// ---------------------------------------------------------------- tables

namespace {

const char* kTableColumns = "channel\tsnr_db\tpsnr_db\tperceptual\tn_images\tseed";

template <class F>
double mean_of(const MetricsTable& t, double snr_db, F field) {
  double acc = 0.0;
  int n = 0;
  for (const MetricsRow& r : t.rows) {
    if (r.snr_db == snr_db) {
      acc += field(r);
      ++n;
    }
  }
  if (n == 0) throw InputError("no table rows at " + fmt17(snr_db) + " dB");
  return acc / n;
}

}  // namespace

double MetricsTable::mean_psnr(double snr_db) const {
  return mean_of(*this, snr_db, [](const MetricsRow& r) { return r.psnr_db; });
}

double MetricsTable::mean_perceptual(double snr_db) const {
  return mean_of(*this, snr_db, [](const MetricsRow& r) { return r.perceptual; });
}

void write_metrics_table(const std::string& path, const MetricsTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics table " + path);
  out << "# semsplit-metrics-table " << MetricsTable::kVersion << "\n" << kTableColumns << "\n";
  for (const MetricsRow& r : table.rows) {
    out << r.channel << '\t' << fmt17(r.snr_db) << '\t' << fmt17(r.psnr_db) << '\t' << fmt17(r.perceptual) << '\t'
        << r.n_images << '\t' << r.seed << '\n';
  }
  if (!out) throw IoError("failed writing metrics table " + path);
}

MetricsTable read_metrics_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics table " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# semsplit-metrics-table ", 0) != 0) {
    throw IoError(path + ": missing metrics table header");
  }
  const long long version = parse_int(line.substr(25), path);
  if (version != MetricsTable::kVersion) throw IoError(path + ": unsupported table version " + std::to_string(version));
  if (!std::getline(in, line) || line != kTableColumns) throw IoError(path + ": unexpected column line");
  MetricsTable t;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto f = split(line, '\t');
    if (f.size() != 6) throw IoError(where + ": expected 6 fields");
    MetricsRow r;
    r.channel = f[0];
    r.snr_db = parse_double(f[1], where);
    r.psnr_db = parse_double(f[2], where);
    r.perceptual = parse_double(f[3], where);
    r.n_images = static_cast<int>(parse_int(f[4], where));
    r.seed = static_cast<std::uint64_t>(std::stoull(f[5]));
    t.rows.push_back(std::move(r));
  }
  return t;
}

// ---------------------------------------------------------------- evaluation

namespace {

struct Encoded {
  ag::Var z, p, c;
  GroupAssignment assignment;
};

Encoded encode_batch(const Model& model, const TrainConfig& cfg, const Tensor& images, Rng& rng) {
  const int K = images.dim(0);
  Encoded e;
  e.z = model.semantic_encode(ag::constant(images));
  e.p = model.private_encode(e.z);
  const std::uint64_t cluster_seed = derive_seed(rng);
  if (cfg.model.private_only) {
    e.assignment = make_assignment(Tensor({K, 1}), std::vector<int>(static_cast<std::size_t>(K), 0));
  } else {
    e.assignment = cluster_users(e.p.value(), cfg.groups, cluster_seed, cfg.clustering);
    e.c = model.common_encode(e.z, e.assignment.groups);
  }
  return e;
}

void check_batch(const Checkpoint& ck, const Tensor& images) {
  const ModelConfig& m = ck.config.model;
  if (images.rank() != 4 || images.dim(1) != m.image_channels || images.dim(2) != m.image_size || images.dim(3) != m.image_size) {
    throw InputError("images " + shape_str(images.shape()) + " do not match the checkpoint's " +
                     std::to_string(m.image_channels) + "x" + std::to_string(m.image_size) + "x" + std::to_string(m.image_size));
  }
  if (images.dim(0) != ck.config.batch_size) {
    throw InputError("batch of " + std::to_string(images.dim(0)) + " images, checkpoint expects " +
                     std::to_string(ck.config.batch_size));
  }
}

int full_batches(const Checkpoint& ck, const Dataset& data) {
  const int K = ck.config.batch_size;
  const int n = data.size() / K;
  if (n < 1) {
    throw InputError("dataset has " + std::to_string(data.size()) + " images, fewer than one batch of " + std::to_string(K));
  }
  return n;
}

std::vector<int> batch_index(int b, int K) {
  std::vector<int> idx(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) idx[static_cast<std::size_t>(k)] = b * K + k;
  return idx;
}

}  // namespace

Tensor reconstruct(const Checkpoint& ck, const Tensor& images, double snr_db, const ChannelConfig& channel, Rng& rng) {
  check_batch(ck, images);
  const TrainConfig& cfg = ck.config;
  const int K = images.dim(0);
  const Model model(ck.state.params, false);
  const Encoded e = encode_batch(model, cfg, images, rng);
  const ChannelRealization ch = sample_channel(channel, K, snr_db, rng);
  ag::Var received_common;
  if (!cfg.model.private_only) received_common = ag::transmit_common(e.c, e.assignment, ch, channel.interference, rng);
  const ag::Var received_private = ag::transmit_private(e.p, ch, channel.interference, rng);
  return model.decode(received_common, received_private, identity_ids(K)).value();
}

MetricsTable evaluate(const Checkpoint& ck, const Dataset& images, const EvalOptions& opts) {
  if (opts.snr_grid.empty()) throw ConfigError("evaluation needs a non-empty SNR grid");
  if (opts.seeds.empty()) throw ConfigError("evaluation needs at least one seed");
  std::shared_ptr<const FeatureExtractor> net = opts.perceptual;
  if (!net) net = ConvFeatureNet::builtin();
  const int K = ck.config.batch_size;
  const int batches = full_batches(ck, images);

  std::map<std::pair<double, std::uint64_t>, MetricsRow> cells;
  for (double snr : opts.snr_grid) {
    for (std::uint64_t seed : opts.seeds) {
      Rng rng(seed);
      double psnr_acc = 0.0;
      double perc_acc = 0.0;
      for (int b = 0; b < batches; ++b) {
        const Tensor x = images.gather(batch_index(b, K));
        const Tensor y = reconstruct(ck, x, snr, opts.channel, rng);
        for (double v : psnr_per_image(x, y)) psnr_acc += v;
        perc_acc += perceptual_loss(x, y, net.get());
      }
      MetricsRow r;
      r.channel = to_string(opts.channel.model);
      r.snr_db = snr;
      r.psnr_db = psnr_acc / (static_cast<double>(batches) * K);
      r.perceptual = perc_acc / batches;
      r.n_images = batches * K;
      r.seed = seed;
      cells[{snr, seed}] = std::move(r);
    }
  }
  MetricsTable t;
  for (double snr : opts.snr_grid) {
    for (std::uint64_t seed : opts.seeds) t.rows.push_back(cells.at({snr, seed}));
  }
  return t;
}

MetricsTable evaluate(const std::string& checkpoint_path, const Dataset& images, const EvalOptions& opts) {
  return evaluate(load_checkpoint(checkpoint_path), images, opts);
}

MetricsTable private_only_ablation(TrainConfig cfg, const Dataset& train_set, const Dataset& eval_set, const std::string& out_dir,
                                   const EvalOptions& opts) {
  cfg.model.private_only = true;
  cfg.resolve();
  cfg.validate();
  const TrainResult r = train(cfg, train_set, out_dir);
  return evaluate(r.final_checkpoint, eval_set, opts);
}

// ---------------------------------------------------------------- latent diagnostics

SimilarityReport similarity_from_features(const Tensor& group_features) {
  if (group_features.rank() != 2 || group_features.dim(0) < 1) throw InputError("similarity report needs [G, L] features");
  const int G = group_features.dim(0);
  SimilarityReport r;
  r.X = cosine_similarity_matrix(group_features);
  for (int i = 0; i < G; ++i) r.X.at(i, i) = 1.0;
  for (int i = 0; i < G; ++i) {
    for (int j = i + 1; j < G; ++j) {
      const double v = 0.5 * (r.X.at(i, j) + r.X.at(j, i));
      r.X.at(i, j) = v;
      r.X.at(j, i) = v;
    }
  }
  const Tensor T = target_similarity_matrix(G);
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      if (i != j) r.deviation = std::max(r.deviation, std::abs(r.X.at(i, j) - T.at(i, j)));
    }
  }
  return r;
}

namespace {

// Common features [G, L_c] of each full batch, in batch order.
std::vector<Tensor> batch_common_features(const Checkpoint& ck, const Dataset& images, std::uint64_t seed) {
  if (ck.config.model.private_only) throw ConfigError("private-only checkpoints have no common features");
  const int K = ck.config.batch_size;
  const int batches = full_batches(ck, images);
  const Model model(ck.state.params, false);
  Rng rng(seed);
  std::vector<Tensor> out;
  for (int b = 0; b < batches; ++b) {
    const Tensor x = images.gather(batch_index(b, K));
    check_batch(ck, x);
    out.push_back(encode_batch(model, ck.config, x, rng).c.value());
  }
  return out;
}

}  // namespace

SimilarityReport similarity_report(const Checkpoint& ck, const Dataset& images, std::uint64_t seed) {
  const std::vector<Tensor> per_batch = batch_common_features(ck, images, seed);
  Tensor mean(per_batch.front().shape());
  for (const Tensor& c : per_batch) {
    for (std::size_t i = 0; i < c.size(); ++i) mean[i] += c[i] / static_cast<double>(per_batch.size());
  }
  return similarity_from_features(mean);
}

std::vector<EmbeddingRecord> export_embeddings(const Checkpoint& ck, const Dataset& images, const std::string& out_file,
                                               std::uint64_t seed) {
  const std::vector<Tensor> per_batch = batch_common_features(ck, images, seed);
  std::vector<EmbeddingRecord> records;
  for (std::size_t b = 0; b < per_batch.size(); ++b) {
    const Tensor& c = per_batch[b];
    const int L = c.dim(1);
    for (int g = 0; g < c.dim(0); ++g) {
      EmbeddingRecord r;
      r.group_id = g;
      r.epoch = ck.state.epoch;
      r.batch = static_cast<int>(b);
      r.values.assign(c.data() + static_cast<std::size_t>(g) * L, c.data() + static_cast<std::size_t>(g + 1) * L);
      records.push_back(std::move(r));
    }
  }
  std::ofstream out(out_file);
  if (!out) throw IoError("cannot write embeddings " + out_file);
  out << "# semsplit-embeddings 1\ngroup_id\tepoch\tbatch\tdim\tvalues\n";
  for (const EmbeddingRecord& r : records) {
    out << r.group_id << '\t' << r.epoch << '\t' << r.batch << '\t' << r.values.size() << '\t';
    for (std::size_t i = 0; i < r.values.size(); ++i) out << (i ? "," : "") << fmt17(r.values[i]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing embeddings " + out_file);
  return records;
}

std::vector<EmbeddingRecord> read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings " + path);
  std::string line;
  if (!std::getline(in, line) || line != "# semsplit-embeddings 1") throw IoError(path + ": missing embeddings header");
  if (!std::getline(in, line) || line != "group_id\tepoch\tbatch\tdim\tvalues") throw IoError(path + ": unexpected column line");
  std::vector<EmbeddingRecord> out;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto f = split(line, '\t');
    if (f.size() != 5) throw IoError(where + ": expected 5 fields");
    EmbeddingRecord r;
    r.group_id = static_cast<int>(parse_int(f[0], where));
    r.epoch = static_cast<int>(parse_int(f[1], where));
    r.batch = static_cast<int>(parse_int(f[2], where));
    const long long dim = parse_int(f[3], where);
    if (!f[4].empty()) {
      for (const std::string& v : split(f[4], ',')) r.values.push_back(parse_double(v, where));
    }
    if (static_cast<long long>(r.values.size()) != dim) throw IoError(where + ": dim does not match value count");
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------- plots

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string plot_svg(const std::vector<PlotSeries>& series, const std::string& metric, const std::string& title) {
  if (metric != "psnr" && metric != "perceptual") throw ConfigError("plot metric must be 'psnr' or 'perceptual'");
  if (series.empty()) throw InputError("plot needs at least one series");

  struct Curve {
    std::string label;
    std::vector<std::pair<double, double>> pts;
  };
  std::vector<Curve> curves;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const PlotSeries& s : series) {
    std::set<double> snrs;
    for (const MetricsRow& r : s.table.rows) snrs.insert(r.snr_db);
    Curve c{s.label, {}};
    for (double x : snrs) {
      const double y = metric == "psnr" ? s.table.mean_psnr(x) : s.table.mean_perceptual(x);
      c.pts.emplace_back(x, y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    if (c.pts.empty()) throw InputError("plot series '" + s.label + "' has no rows");
    curves.push_back(std::move(c));
  }
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }
  if (ymax == ymin) {
    ymin -= 1;
    ymax += 1;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double W = 640, H = 420, left = 70, right = 170, top = 40, bottom = 55;
  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
    << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    o << "<line x1=\"" << num(sx(xv)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(sx(xv)) << "\" y2=\"" << num(top + ph)
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << tick_label(xv)
      << "</text>\n";
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(sy(yv)) << "\" x2=\"" << num(left + pw) << "\" y2=\"" << num(sy(yv))
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 14) << "\" text-anchor=\"middle\">SNR (dB)</text>\n";
  o << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << (metric == "psnr" ? "PSNR (dB)" : "Perceptual loss") << "</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = colors[i % 8];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : curves[i].pts) o << num(sx(x)) << ',' << num(sy(y)) << ' ';
    o << "\"/>\n";
    for (const auto& [x, y] : curves[i].pts) {
      o << "<circle cx=\"" << num(sx(x)) << "\" cy=\"" << num(sy(y)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 36) << "\" y2=\""
      << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(left + pw + 42) << "\" y=\"" << num(ly + 4) << "\">" << xml_escape(curves[i].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace semsplit
