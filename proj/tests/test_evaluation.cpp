#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "semsplit/error.hpp"
#include "semsplit/evaluation.hpp"
#include "semsplit/loss.hpp"
#include "test_helpers.hpp"

using namespace semsplit;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.base_width = 8;
  c.model.encoder_blocks = {1, 1};
  c.model.common_blocks = 1;
  c.model.decoder_blocks = {1, 1, 1};
  c.model.transformer_layers = 1;
  c.model.transformer_heads = 2;
  c.model.ffn_mult = 2;
  c.symbols = 32;
  c.common_ratio = 0.25;
  c.batch_size = 4;
  c.groups = 2;
  c.learning_rate = 1e-3;
  c.epochs = 1;
  c.checkpoint_interval = 1;
  c.data.source = "synthetic";
  c.data.train_size = 8;
  c.data.eval_size = 8;
  c.resolve();
  c.validate();
  return c;
}

Checkpoint tiny_checkpoint(const TrainConfig& cfg = tiny_config()) { return Checkpoint{cfg, init_state(cfg)}; }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("semsplit_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double oracle_psnr(const Tensor& a, const Tensor& b, std::size_t begin, std::size_t end) {
  double se = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double x = a[i] < 0 ? 0 : (a[i] > 1 ? 1 : a[i]);
    const double y = b[i] < 0 ? 0 : (b[i] > 1 ? 1 : b[i]);
    se += (x - y) * (x - y);
  }
  const double mse = se / static_cast<double>(end - begin);
  if (mse == 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

}  // namespace

TEST_CASE("psnr reference values") {
  Rng rng(1);
  const Tensor s = test::random_tensor({2, 3, 4, 4}, rng, 0.2, 0.8);
  CHECK(psnr(s, s) == kPsnrCapDb);
  Tensor shifted = s;
  for (std::size_t i = 0; i < s.size(); ++i) shifted[i] += 0.1;
  CHECK(psnr(s, shifted) == doctest::Approx(20.0).epsilon(1e-9));
  Tensor half = s;
  for (std::size_t i = 0; i < s.size(); ++i) half[i] += 0.5;
  CHECK(std::abs(psnr(s, half) - oracle_psnr(s, half, 0, s.size())) <= 1e-9);
  CHECK_THROWS_AS(psnr(s, Tensor({2, 3, 4, 5})), InputError);
}

TEST_CASE("psnr agrees with an elementwise oracle on 100 random pairs") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor a = test::random_tensor({3, 3, 5, 5}, rng, -0.3, 1.3);
    const Tensor b = test::random_tensor({3, 3, 5, 5}, rng, -0.3, 1.3);
    CHECK(std::abs(psnr(a, b) - oracle_psnr(a, b, 0, a.size())) <= 1e-9);
    const auto per = psnr_per_image(a, b);
    REQUIRE(per.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(per[i] - oracle_psnr(a, b, i * 75, (i + 1) * 75)) <= 1e-9);
  }
}

TEST_CASE("perceptual loss basics") {
  const auto net = ConvFeatureNet::builtin();
  Rng rng(3);
  const Tensor s = test::random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  CHECK(perceptual_loss(s, s, net.get()) == 0.0);
  for (int i = 0; i < 5; ++i) {
    const Tensor t = test::random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
    CHECK(perceptual_loss(s, t, net.get()) >= 0.0);
  }
  CHECK_THROWS_AS(perceptual_loss(s, s, nullptr), ConfigError);
  CHECK(net->features(s).size() == 3);
}

TEST_CASE("perceptual loss grows with additive noise amplitude") {
  const auto net = ConvFeatureNet::builtin();
  const Dataset ds = make_synthetic(1, 11);
  Rng rng(5);
  const Tensor noise = test::normal_tensor(ds.images.shape(), rng);
  double prev = 0.0;
  for (double amp : {0.02, 0.1, 0.3}) {
    Tensor noisy = ds.images;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += amp * noise[i];
    const double v = perceptual_loss(ds.images, noisy, net.get());
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("feature net weights round-trip through JSON") {
  const fs::path dir = scratch_dir("featnet");
  const auto net = ConvFeatureNet::builtin();
  net->save((dir / "net.json").string());
  const auto loaded = ConvFeatureNet::load((dir / "net.json").string());
  Rng rng(9);
  const Tensor s = test::random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
  const auto a = net->features(s);
  const auto b = loaded->features(s);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(loaded->name() == net->name());

  std::string zeros = "0";
  for (int i = 1; i < 54; ++i) zeros += ",0";
  std::ofstream(dir / "bad.json") << R"({"taps":[3],"layers":[{"weight_shape":[2,3,3,3],"weight":[)" << zeros
                                  << R"(],"bias":[0,0]}]})";
  CHECK_THROWS_AS(ConvFeatureNet::load((dir / "bad.json").string()), ConfigError);
  CHECK_THROWS_AS(ConvFeatureNet::load((dir / "missing.json").string()), IoError);
}

TEST_CASE("pooled VGG-style layers are supported") {
  std::vector<ConvFeatureNet::Layer> layers(2);
  Rng rng(4);
  layers[0].weight = test::normal_tensor({4, 3, 3, 3}, rng, 0.3);
  layers[0].bias = Tensor({4});
  layers[0].pool = 2;
  layers[1].weight = test::normal_tensor({6, 4, 3, 3}, rng, 0.3);
  layers[1].bias = Tensor({6});
  const ConvFeatureNet net("vgg-like", layers, {0, 1}, {0.485, 0.456, 0.406}, {0.229, 0.224, 0.225});
  const auto f = net.features(test::random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0));
  REQUIRE(f.size() == 2);
  CHECK(f[0].shape() == Shape{1, 4, 4, 4});
  CHECK(f[1].shape() == Shape{1, 6, 4, 4});
  CHECK_THROWS_AS(ConvFeatureNet("bad", layers, {2}), ConfigError);
}

TEST_CASE("metrics table round trip and header checks") {
  const fs::path dir = scratch_dir("table");
  MetricsTable t;
  t.rows.push_back({"awgn", 0.0, 12.345678901234567, 0.25, 100, 0});
  t.rows.push_back({"rayleigh", 18.0, 100.0, 0.0, 50, 7});
  const std::string path = (dir / "t.tsv").string();
  write_metrics_table(path, t);
  CHECK(read_metrics_table(path) == t);
  CHECK(read_file(path).rfind("# semsplit-metrics-table 1\n", 0) == 0);
  CHECK(t.mean_psnr(18.0) == 100.0);
  CHECK_THROWS_AS(t.mean_psnr(6.0), InputError);

  std::ofstream(dir / "v9.tsv") << "# semsplit-metrics-table 9\n";
  CHECK_THROWS_AS(read_metrics_table((dir / "v9.tsv").string()), IoError);
  std::ofstream(dir / "junk.tsv") << "hello\n";
  CHECK_THROWS_AS(read_metrics_table((dir / "junk.tsv").string()), IoError);
}

TEST_CASE("evaluate produces one row per grid point and seed, deterministically") {
  const Checkpoint ck = tiny_checkpoint();
  const Dataset ds = make_synthetic(9, 21);
  EvalOptions opts;
  opts.snr_grid = {0, 12};
  opts.seeds = {1, 2, 3};
  const MetricsTable a = evaluate(ck, ds, opts);
  REQUIRE(a.rows.size() == 6);
  for (const MetricsRow& r : a.rows) {
    CHECK(r.n_images == 8);
    CHECK(r.channel == "awgn");
    CHECK(std::isfinite(r.psnr_db));
    CHECK(r.perceptual >= 0.0);
  }
  CHECK(a.rows[0].snr_db == 0.0);
  CHECK(a.rows[0].seed == 1);
  CHECK(a.rows[5].snr_db == 12.0);
  CHECK(a.rows[5].seed == 3);
  CHECK(evaluate(ck, ds, opts) == a);

  opts.snr_grid.clear();
  CHECK_THROWS_AS(evaluate(ck, ds, opts), ConfigError);
  opts.snr_grid = {0};
  CHECK_THROWS_AS(evaluate(ck, ds.head(3), opts), InputError);
}

TEST_CASE("evaluate at 100 dB matches noiseless reconstruction") {
  const Checkpoint ck = tiny_checkpoint();
  const Dataset ds = make_synthetic(4, 22);
  Rng r1(5), r2(5);
  const Tensor noisy = reconstruct(ck, ds.images, 100.0, ChannelConfig{}, r1);
  const Tensor clean = reconstruct(ck, ds.images, std::numeric_limits<double>::infinity(), ChannelConfig{}, r2);
  CHECK(test::max_abs_diff(noisy, clean) < 1e-3);
  EvalOptions opts;
  opts.snr_grid = {100.0};
  opts.seeds = {5};
  const MetricsTable t = evaluate(ck, ds, opts);
  double expected = 0.0;
  for (double v : psnr_per_image(ds.images, clean)) expected += v / 4;
  CHECK(t.rows[0].psnr_db == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("evaluate leaves the checkpoint file untouched") {
  const fs::path dir = scratch_dir("readonly");
  const TrainConfig cfg = tiny_config();
  const std::string path = (dir / "ck.ckpt").string();
  save_checkpoint(path, cfg, init_state(cfg));
  const std::string before = read_file(path);
  const auto mtime = fs::last_write_time(path);
  EvalOptions opts;
  opts.snr_grid = {6};
  evaluate(path, make_synthetic(4, 3), opts);
  CHECK(read_file(path) == before);
  CHECK(fs::last_write_time(path) == mtime);
}

TEST_CASE("evaluate rejects images that do not fit the checkpoint") {
  const Checkpoint ck = tiny_checkpoint();
  Dataset small = make_synthetic(4, 3, 16);
  EvalOptions opts;
  CHECK_THROWS_AS(evaluate(ck, small, opts), InputError);
}

TEST_CASE("fading channels and interference run through evaluate") {
  const Checkpoint ck = tiny_checkpoint();
  const Dataset ds = make_synthetic(4, 8);
  for (ChannelModel m : {ChannelModel::Rician, ChannelModel::Rayleigh}) {
    EvalOptions opts;
    opts.snr_grid = {6};
    opts.channel.model = m;
    opts.channel.interference = true;
    const MetricsTable t = evaluate(ck, ds, opts);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].channel == to_string(m));
  }
}

TEST_CASE("private-only ablation spends the whole budget on private features") {
  const fs::path dir = scratch_dir("ablation");
  const TrainConfig cfg = tiny_config();
  EvalOptions opts;
  opts.snr_grid = {0, 18};
  opts.seeds = {0, 1};
  const MetricsTable t = private_only_ablation(cfg, make_synthetic(8, 1), make_synthetic(4, 2), dir.string(), opts);
  CHECK(t.rows.size() == 4);
  const Checkpoint ck = load_checkpoint((dir / checkpoint_name(1)).string());
  CHECK(ck.config.model.private_only);
  CHECK(ck.config.model.common_dim == 0);
  CHECK(ck.config.model.private_dim == 2 * cfg.symbols);
  CHECK_THROWS_AS(similarity_report(ck, make_synthetic(4, 2)), ConfigError);
}

TEST_CASE("similarity report is symmetric with a unit diagonal") {
  const TrainConfig cfg = tiny_config();
  const Checkpoint ck = tiny_checkpoint(cfg);
  const SimilarityReport r = similarity_report(ck, make_synthetic(8, 4));
  REQUIRE(r.X.shape() == Shape{cfg.groups, cfg.groups});
  for (int i = 0; i < cfg.groups; ++i) {
    CHECK(std::abs(r.X.at(i, i) - 1.0) <= 1e-6);
    for (int j = 0; j < cfg.groups; ++j) CHECK(r.X.at(i, j) == r.X.at(j, i));
  }
  CHECK(r.deviation >= 0.0);

  Rng rng(12);
  const SimilarityReport f = similarity_from_features(test::normal_tensor({6, 10}, rng));
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(f.X.at(i, i) - 1.0) <= 1e-6);
    for (int j = 0; j < 6; ++j) CHECK(f.X.at(i, j) == f.X.at(j, i));
  }
}

TEST_CASE("similarity of the equiangular free-vector run") {
  const SimilarityReport r = similarity_from_features(optimize_free_vectors(FreeVectorRun{}));
  CHECK(r.deviation <= 0.02);

  const Tensor T = target_similarity_matrix(3);
  Tensor simplex({3, 2});
  for (int i = 0; i < 3; ++i) {
    simplex.at(i, 0) = std::cos(2.0 * M_PI * i / 3.0);
    simplex.at(i, 1) = std::sin(2.0 * M_PI * i / 3.0);
  }
  const SimilarityReport s = similarity_from_features(simplex);
  CHECK(s.deviation < 1e-12);
  CHECK(s.X.at(0, 1) == doctest::Approx(T.at(0, 1)));
}

TEST_CASE("embedding export count, round trip and bit-exact values") {
  const fs::path dir = scratch_dir("embed");
  const TrainConfig cfg = tiny_config();
  Checkpoint ck = tiny_checkpoint(cfg);
  ck.state.epoch = 7;
  const Dataset ds = make_synthetic(9, 6);
  const std::string path = (dir / "emb.tsv").string();
  const auto records = export_embeddings(ck, ds, path, 3);
  const int batches = 2;
  REQUIRE(records.size() == static_cast<std::size_t>(cfg.groups * batches));
  CHECK(read_embeddings(path) == records);

  const Model model(ck.state.params, false);
  Rng rng(3);
  for (int b = 0; b < batches; ++b) {
    const Tensor x = ds.gather({4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3});
    const ag::Var z = model.semantic_encode(ag::constant(x));
    const ag::Var p = model.private_encode(z);
    const GroupAssignment a = cluster_users(p.value(), cfg.groups, derive_seed(rng), cfg.clustering);
    const Tensor c = model.common_encode(z, a.groups).value();
    for (int g = 0; g < cfg.groups; ++g) {
      const EmbeddingRecord& r = records[static_cast<std::size_t>(b * cfg.groups + g)];
      CHECK(r.group_id == g);
      CHECK(r.batch == b);
      CHECK(r.epoch == 7);
      REQUIRE(r.values.size() == static_cast<std::size_t>(cfg.model.common_dim));
      for (int l = 0; l < cfg.model.common_dim; ++l) CHECK(r.values[static_cast<std::size_t>(l)] == c.at(g, l));
    }
  }

  std::ofstream(dir / "bad.tsv") << "# semsplit-embeddings 1\ngroup_id\tepoch\tbatch\tdim\tvalues\n0\t0\t0\t3\t1,2\n";
  CHECK_THROWS_AS(read_embeddings((dir / "bad.tsv").string()), IoError);
  CHECK_THROWS_AS(export_embeddings(ck, ds, (dir / "no/such/dir/e.tsv").string()), IoError);
}

TEST_CASE("svg plot draws one curve per series") {
  MetricsTable a, b;
  for (double snr : {0.0, 6.0, 12.0}) {
    a.rows.push_back({"awgn", snr, 10 + snr, 0.5 - snr / 30, 10, 0});
    a.rows.push_back({"awgn", snr, 11 + snr, 0.4 - snr / 30, 10, 1});
    b.rows.push_back({"awgn", snr, 9 + snr / 2, 0.6, 10, 0});
  }
  const std::string svg = plot_svg({{"full <model>", a}, {"private-only", b}}, "psnr", "AWGN");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t count = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++count;
  CHECK(count == 2);
  CHECK(svg.find("full &lt;model&gt;") != std::string::npos);
  CHECK_NOTHROW(plot_svg({{"a", a}}, "perceptual", "x"));
  CHECK_THROWS_AS(plot_svg({{"a", a}}, "ssim", "x"), ConfigError);
  CHECK_THROWS_AS(plot_svg({}, "psnr", "x"), InputError);
}
