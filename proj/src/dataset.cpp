// SPDX-License-Identifier: Apache-2.0
#include "semsplit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "semsplit/error.hpp"

namespace semsplit {

namespace fs = std::filesystem;

Tensor Dataset::gather(const std::vector<int>& index) const {
  require(images.rank() == 4, "dataset has no images");
  const int c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t per = static_cast<std::size_t>(c) * h * w;
  Tensor out({static_cast<int>(index.size()), c, h, w});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const int src = index[i];
    if (src < 0 || src >= size()) throw InputError("image index " + std::to_string(src) + " out of range");
    std::copy_n(images.data() + static_cast<std::size_t>(src) * per, per, out.data() + i * per);
  }
  return out;
}

Dataset Dataset::head(int n) const {
  n = std::min(n, size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return Dataset{gather(idx), std::vector<int>(labels.begin(), labels.begin() + std::min<std::size_t>(labels.size(), idx.size()))};
}

Dataset make_synthetic(int count, std::uint64_t seed, int size) {
  require(count >= 0 && size >= 4, "synthetic dataset needs count >= 0 and size >= 4");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds{Tensor({count, 3, size, size}), std::vector<int>(static_cast<std::size_t>(count))};
  const std::size_t plane = static_cast<std::size_t>(size) * size;

  for (int n = 0; n < count; ++n) {
    double* img = ds.images.data() + static_cast<std::size_t>(n) * 3 * plane;
    std::array<double, 3> c0{}, c1{};
    for (int ch = 0; ch < 3; ++ch) {
      c0[static_cast<std::size_t>(ch)] = u(rng);
      c1[static_cast<std::size_t>(ch)] = u(rng);
    }
    const double angle = 2.0 * std::acos(-1.0) * u(rng);
    const double dx = std::cos(angle), dy = std::sin(angle);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double t = 0.5 + 0.5 * ((x / (size - 1.0) - 0.5) * dx + (y / (size - 1.0) - 0.5) * dy) * 1.4142;
        for (int ch = 0; ch < 3; ++ch) {
          img[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * size + x] =
              std::clamp((1 - t) * c0[static_cast<std::size_t>(ch)] + t * c1[static_cast<std::size_t>(ch)], 0.0, 1.0);
        }
      }
    }

    const int objects = 1 + static_cast<int>(u(rng) * 3.0) % 3;
    double largest = -1.0;
    for (int o = 0; o < objects; ++o) {
      const int kind = static_cast<int>(u(rng) * 3.0) % 3;
      const double cx = size * (0.2 + 0.6 * u(rng)), cy = size * (0.2 + 0.6 * u(rng));
      const double r = size * (0.1 + 0.2 * u(rng));
      std::array<double, 3> col{};
      for (auto& v : col) v = u(rng);
      double area = 0.0;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double px = x + 0.5 - cx, py = y + 0.5 - cy;
          bool inside = false;
          if (kind == 0) {
            inside = px * px + py * py <= r * r;
          } else if (kind == 1) {
            inside = std::abs(px) <= r && std::abs(py) <= 0.6 * r;
          } else {
            inside = py <= r * 0.6 && py >= -r && std::abs(px) <= (py + r) * 0.6;
          }
          if (!inside) continue;
          area += 1.0;
          for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * size + x] = col[static_cast<std::size_t>(ch)];
        }
      }
      if (area > largest) {
        largest = area;
        ds.labels[static_cast<std::size_t>(n)] = kind;
      }
    }
  }
  return ds;
}

Dataset load_cifar10(const std::string& path, bool train, int limit) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    if (train) {
      for (int i = 1; i <= 5; ++i) {
        const fs::path f = fs::path(path) / ("data_batch_" + std::to_string(i) + ".bin");
        if (fs::exists(f)) files.push_back(f);
      }
    } else {
      files.push_back(fs::path(path) / "test_batch.bin");
    }
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw IoError("no CIFAR-10 batch files found under " + path);

  constexpr int kRecord = 1 + 3072;
  std::vector<unsigned char> raw;
  std::vector<int> labels;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IoError("cannot open " + f.string());
    std::vector<unsigned char> rec(kRecord);
    while (limit <= 0 || static_cast<int>(labels.size()) < limit) {
      in.read(reinterpret_cast<char*>(rec.data()), kRecord);
      if (in.gcount() == 0) break;
      if (in.gcount() != kRecord) throw IoError("truncated CIFAR-10 record in " + f.string());
      if (rec[0] > 9) throw IoError("invalid CIFAR-10 label in " + f.string());
      labels.push_back(rec[0]);
      raw.insert(raw.end(), rec.begin() + 1, rec.end());
    }
  }
  Dataset ds{Tensor({static_cast<int>(labels.size()), 3, 32, 32}), std::move(labels)};
  for (std::size_t i = 0; i < raw.size(); ++i) ds.images[i] = raw[i] / 255.0;
  return ds;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng) {
  require(batch_size >= 1, "batch size must be positive");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates shuffle.
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<int>> batches;
  for (int b = 0; b + batch_size <= n; b += batch_size) {
    batches.emplace_back(order.begin() + b, order.begin() + b + batch_size);
  }
  return batches;
}

}  // namespace semsplit
