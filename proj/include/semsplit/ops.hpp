// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "semsplit/autograd.hpp"

namespace semsplit::ag {

enum class Backend { Parallel, Reference };

/// Selects the kernel family used by the convolution and matmul ops.
void set_backend(Backend b);
Backend backend();

// Elementwise on equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);

Var reshape(const Var& a, Shape shape);

// Along the leading dimension, any rank.
Var concat0(const std::vector<Var>& parts);
Var gather0(const Var& a, const std::vector<int>& index);

// Two-dimensional helpers.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int begin, int end);
Var transpose(const Var& a);
Var matmul(const Var& a, const Var& b);
/// x [N, in] * W[out, in]^T + b[out]
Var linear(const Var& x, const Var& w, const Var& b);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// [N, D] -> [1, D]
Var mean_rows(const Var& a);

// NCHW image ops.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Global response normalisation with residual: gamma*(x*N(x)) + beta + x.
Var grn(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
/// Non-overlapping max pooling (kernel == stride). Spatial dims must divide.
Var max_pool2d(const Var& x, int kernel);
/// Bilinear upsampling with half-pixel centres (align_corners = false).
Var upsample_bilinear(const Var& x, int scale);

}  // namespace semsplit::ag
