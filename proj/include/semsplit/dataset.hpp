// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semsplit/rng.hpp"
#include "semsplit/tensor.hpp"

namespace semsplit {

/// In-memory image set, [N, C, H, W] with values in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;

  int size() const { return images.rank() == 4 ? images.dim(0) : 0; }
  /// Gathers the listed images into a [n, C, H, W] batch.
  Tensor gather(const std::vector<int>& index) const;
  /// First n images.
  Dataset head(int n) const;
};

/// Procedural 32x32 RGB scenes: a two-colour gradient background with one to
/// three filled discs, rectangles or triangles. The label is the shape of the
/// largest object (0 disc, 1 rectangle, 2 triangle).
Dataset make_synthetic(int count, std::uint64_t seed, int size = 32);

/// Reads CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record).
/// `path` is a .bin file or a directory holding data_batch_*.bin (train) or
/// test_batch.bin (test). Stops after `limit` images when limit > 0.
Dataset load_cifar10(const std::string& path, bool train, int limit = 0);

/// Epoch order: a permutation of [0, n) drawn from `rng`, cut into full
/// batches of `batch_size`; the trailing partial batch is dropped.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng);

}  // namespace semsplit
