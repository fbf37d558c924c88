// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "semsplit/channel.hpp"
#include "semsplit/clustering.hpp"
#include "semsplit/error.hpp"
#include "semsplit/evaluation.hpp"
#include "semsplit/training.hpp"

using namespace semsplit;
namespace fs = std::filesystem;

namespace {

struct DataOverrides {
  int eval_size = 0;
  std::string data_path;

  void apply(TrainConfig& cfg) const {
    if (eval_size > 0) cfg.data.eval_size = eval_size;
    if (!data_path.empty()) cfg.data.path = data_path;
  }
};

void add_data_options(CLI::App* cmd, DataOverrides& d) {
  cmd->add_option("--eval-size", d.eval_size, "Number of held-out images (overrides the checkpoint's data.eval_size)");
  cmd->add_option("--data-path", d.data_path, "CIFAR-10 directory or file (overrides data.path)");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad list entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

Tensor read_feature_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature matrix " + path);
  std::vector<double> data;
  int rows = 0, cols = -1, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line) {
      if (ch == ',' || ch == '\t') ch = ' ';
    }
    std::istringstream ls(line);
    int n = 0;
    std::string tok;
    while (ls >> tok) {
      try {
        data.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw IoError(path + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
      ++n;
    }
    if (n == 0) continue;
    if (cols >= 0 && n != cols) {
      throw IoError(path + ":" + std::to_string(lineno) + ": row has " + std::to_string(n) + " values, expected " + std::to_string(cols));
    }
    cols = n;
    ++rows;
  }
  if (rows == 0) throw IoError(path + ": no feature rows");
  return Tensor({rows, cols}, std::move(data));
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& resume, int log_every) {
  TrainConfig cfg = load_config(config_path);
  configure_runtime(cfg);
  const Dataset data = load_training_set(cfg);
  TrainOptions opts;
  if (!resume.empty()) opts.resume_from = resume;
  opts.on_step = [&](const StepMetrics& m) {
    if (log_every > 0 && m.step % log_every == 0) {
      std::fprintf(stderr, "epoch %d step %lld recon %.6f repul %.6f snr %.2f dB\n", m.epoch, static_cast<long long>(m.step), m.recon,
                   m.repul, m.snr_db);
    }
  };
  const TrainResult r = train(cfg, data, out_dir, opts);
  std::printf("final checkpoint: %s\nmetrics log: %s\n", r.final_checkpoint.c_str(), r.metrics_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& grid, const std::string& channel, double rician_r, bool interference,
             const std::string& seeds, const std::string& out, const std::string& feature_net, const DataOverrides& data) {
  Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig cfg = ck.config;
  data.apply(cfg);
  configure_runtime(cfg);
  EvalOptions opts;
  opts.snr_grid = parse_list(grid);
  opts.channel.model = parse_channel_model(channel);
  opts.channel.rician_r = rician_r;
  opts.channel.interference = interference;
  opts.seeds.clear();
  for (double s : parse_list(seeds)) {
    if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s))) throw ConfigError("seeds must be non-negative integers");
    opts.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (!feature_net.empty()) opts.perceptual = ConvFeatureNet::load(feature_net);
  const MetricsTable t = evaluate(ck, load_eval_set(cfg), opts);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_metrics_table(out, t);
  for (const MetricsRow& r : t.rows) {
    std::printf("%-8s snr %6.2f dB  seed %llu  psnr %8.4f dB  perceptual %.6g  (%d images)\n", r.channel.c_str(), r.snr_db,
                static_cast<unsigned long long>(r.seed), r.psnr_db, r.perceptual, r.n_images);
  }
  return 0;
}

int cmd_cluster_bench(const std::string& features, int groups, std::uint64_t seed, bool normalize, const std::string& out) {
  const Tensor P = read_feature_matrix(features);
  ClusterOptions opts;
  opts.normalize = normalize;
  const GroupAssignment a = cluster_users(P, groups, seed, opts);
  std::ofstream o(out);
  if (!o) throw IoError("cannot write " + out);
  o << "# semsplit-clusters 1\nuser_id\tgroup_id\n";
  for (int k = 0; k < a.num_users; ++k) o << k << '\t' << a.group_of[static_cast<std::size_t>(k)] << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", a.cost);
  o << "# total_cost " << buf << '\n';
  if (!o) throw IoError("failed writing " + out);
  std::printf("%d users, %d groups of %d, total cost %s\n", a.num_users, a.num_groups, a.num_users / a.num_groups, buf);
  return 0;
}

int cmd_loss_bench(std::uint64_t seed, const std::string& out) {
  std::vector<checks::CheckLine> lines = checks::loss_gradient_checks(seed);
  lines.push_back(checks::equiangular_check(checks::run_equiangular(FreeVectorRun{})));
  bool ok = true;
  std::ostringstream report;
  for (const auto& l : lines) {
    report << checks::format_line(l) << '\n';
    ok = ok && l.passed;
  }
  report << (ok ? "ALL PASS" : "SOME CHECKS FAILED") << '\n';
  std::cout << report.str();
  if (!out.empty()) {
    std::ofstream o(out);
    o << report.str();
    if (!o) throw IoError("cannot write " + out);
  }
  return ok ? 0 : 1;
}

int cmd_plot(const std::vector<std::string>& tables, const std::string& metric, const std::string& title, const std::string& out) {
  std::vector<PlotSeries> series;
  for (const std::string& entry : tables) {
    const auto eq = entry.find('=');
    const std::string label = eq == std::string::npos ? fs::path(entry).stem().string() : entry.substr(0, eq);
    const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
    series.push_back({label, read_metrics_table(path)});
  }
  const std::string svg = plot_svg(series, metric, title);
  std::ofstream o(out);
  o << svg;
  if (!o) throw IoError("cannot write " + out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_similarity(const std::string& checkpoint, std::uint64_t seed, const DataOverrides& data) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig cfg = ck.config;
  data.apply(cfg);
  configure_runtime(cfg);
  const SimilarityReport r = similarity_report(ck, load_eval_set(cfg), seed);
  const int G = r.X.dim(0);
  std::printf("cosine similarity of group-mean common features (G = %d, target off-diagonal %.4f)\n", G, G > 1 ? -1.0 / (G - 1) : 0.0);
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) std::printf("%s%8.4f", j ? " " : "", r.X.at(i, j));
    std::printf("\n");
  }
  std::printf("max deviation from target: %.6f\n", r.deviation);
  return 0;
}

int cmd_export_embeddings(const std::string& checkpoint, const std::string& out, std::uint64_t seed, const DataOverrides& data) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig cfg = ck.config;
  data.apply(cfg);
  configure_runtime(cfg);
  const auto records = export_embeddings(ck, load_eval_set(cfg), out, seed);
  std::printf("wrote %zu records to %s\n", records.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-user semantic communication with group common features"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume;
  int log_every = 10;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("--config", config_path, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and logs")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train_cmd->add_option("--log-every", log_every, "Progress line every N steps (0 disables)");

  std::string checkpoint, grid = "0,6,12,18", channel = "awgn", seeds = "0", out_file, feature_net;
  double rician_r = 1.0;
  bool interference = false;
  DataOverrides eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "Sweep SNR points and write a metrics table");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--snr-grid", grid, "Comma-separated SNR values in dB")->capture_default_str();
  eval_cmd->add_option("--channel", channel, "awgn, rician or rayleigh")->capture_default_str();
  eval_cmd->add_option("--rician-r", rician_r, "Rician LOS/NLOS power ratio")->capture_default_str();
  eval_cmd->add_flag("--interference", interference, "Superimpose all transmitted blocks at every user");
  eval_cmd->add_option("--seeds", seeds, "Comma-separated evaluation seeds")->capture_default_str();
  eval_cmd->add_option("--out", out_file, "Metrics table path")->required();
  eval_cmd->add_option("--feature-net", feature_net, "Perceptual feature net weights (JSON)")->check(CLI::ExistingFile);
  add_data_options(eval_cmd, eval_data);

  std::string features, cluster_out;
  int groups = 2;
  std::uint64_t cluster_seed = 0;
  bool normalize = false;
  auto* cluster_cmd = app.add_subcommand("cluster-bench", "Balanced clustering of a feature matrix");
  cluster_cmd->add_option("--features", features, "Text matrix, one user per line")->required()->check(CLI::ExistingFile);
  cluster_cmd->add_option("--groups", groups, "Number of groups")->required();
  cluster_cmd->add_option("--seed", cluster_seed, "k-means seed")->capture_default_str();
  cluster_cmd->add_flag("--normalize", normalize, "Run k-means on L2-normalized rows");
  cluster_cmd->add_option("--out", cluster_out, "Assignment output path")->required();

  std::uint64_t loss_seed = 0;
  std::string loss_out;
  auto* loss_cmd = app.add_subcommand("loss-bench", "Gradient checks and the equiangular free-vector run");
  loss_cmd->add_option("--seed", loss_seed, "Seed for the random probes")->capture_default_str();
  loss_cmd->add_option("--out", loss_out, "Also write the report to this file");

  std::vector<std::string> tables;
  std::string metric = "psnr", title = "PSNR versus SNR", plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "SVG chart from metrics tables");
  plot_cmd->add_option("--table", tables, "label=path of a metrics table (repeatable)")->required();
  plot_cmd->add_option("--metric", metric, "psnr or perceptual")->capture_default_str();
  plot_cmd->add_option("--title", title, "Chart title");
  plot_cmd->add_option("--out", plot_out, "SVG output path")->required();

  std::string sim_checkpoint;
  std::uint64_t sim_seed = 0;
  DataOverrides sim_data;
  auto* sim_cmd = app.add_subcommand("similarity", "Cosine similarity of group-mean common features");
  sim_cmd->add_option("--checkpoint", sim_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--seed", sim_seed, "Clustering seed stream")->capture_default_str();
  add_data_options(sim_cmd, sim_data);

  std::string emb_checkpoint, emb_out;
  std::uint64_t emb_seed = 0;
  DataOverrides emb_data;
  auto* emb_cmd = app.add_subcommand("export-embeddings", "Write common features per group and batch");
  emb_cmd->add_option("--checkpoint", emb_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  emb_cmd->add_option("--out", emb_out, "Embedding file")->required();
  emb_cmd->add_option("--seed", emb_seed, "Clustering seed stream")->capture_default_str();
  add_data_options(emb_cmd, emb_data);

  std::string net_out;
  auto* net_cmd = app.add_subcommand("export-feature-net", "Write the built-in perceptual feature net as JSON");
  net_cmd->add_option("--out", net_out, "JSON output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, out_dir, resume, log_every);
    if (*eval_cmd) return cmd_eval(checkpoint, grid, channel, rician_r, interference, seeds, out_file, feature_net, eval_data);
    if (*cluster_cmd) return cmd_cluster_bench(features, groups, cluster_seed, normalize, cluster_out);
    if (*loss_cmd) return cmd_loss_bench(loss_seed, loss_out);
    if (*plot_cmd) return cmd_plot(tables, metric, title, plot_out);
    if (*sim_cmd) return cmd_similarity(sim_checkpoint, sim_seed, sim_data);
    if (*emb_cmd) return cmd_export_embeddings(emb_checkpoint, emb_out, emb_seed, emb_data);
    if (*net_cmd) {
      ConvFeatureNet::builtin()->save(net_out);
      std::printf("wrote %s\n", net_out.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
