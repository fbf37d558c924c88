// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convolution and GEMM kernels on NCHW buffers.
//
// Two implementations share every signature:
//   kernels::ref  straightforward serial loops, kept as the test oracle
//   kernels::par  im2col + blocked GEMM, OpenMP-parallel over samples/channels
//
// Forward kernels overwrite their output. Backward kernels accumulate (+=)
// into dx/dw/db; pass an empty span to skip a gradient.

#include <span>

namespace semsplit::kernels {

struct ConvGeom {
  int batch = 1;
  int in_ch = 1;
  int in_h = 1;
  int in_w = 1;
  int out_ch = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Transposed convolution; weights laid out [in_ch, out_ch, k, k].
struct TransposeGeom {
  int batch = 1;
  int in_ch = 1;
  int in_h = 1;
  int in_w = 1;
  int out_ch = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h - 1) * stride - 2 * pad + kernel; }
  int out_w() const { return (in_w - 1) * stride - 2 * pad + kernel; }
};

/// Depthwise convolution; weights laid out [ch, 1, k, k].
struct DepthwiseGeom {
  int batch = 1;
  int ch = 1;
  int in_h = 1;
  int in_w = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

using In = std::span<const double>;
using Out = std::span<double>;

#define SEMSPLIT_DECLARE_KERNELS                                                                 \
  void gemm(int m, int n, int k, In a, bool trans_a, In b, bool trans_b, Out c, bool accumulate); \
  void conv2d_forward(const ConvGeom& g, In x, In w, In b, Out y);                                \
  void conv2d_backward(const ConvGeom& g, In x, In w, In dy, Out dx, Out dw, Out db);             \
  void conv_transpose2d_forward(const TransposeGeom& g, In x, In w, In b, Out y);                 \
  void conv_transpose2d_backward(const TransposeGeom& g, In x, In w, In dy, Out dx, Out dw,      \
                                 Out db);                                                         \
  void depthwise_conv2d_forward(const DepthwiseGeom& g, In x, In w, In b, Out y);                \
  void depthwise_conv2d_backward(const DepthwiseGeom& g, In x, In w, In dy, Out dx, Out dw,      \
                                 Out db);

namespace ref {
SEMSPLIT_DECLARE_KERNELS
}  // namespace ref

namespace par {
SEMSPLIT_DECLARE_KERNELS
}  // namespace par

#undef SEMSPLIT_DECLARE_KERNELS

/// Threads the parallel kernels may use (OpenMP max threads, or 1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace semsplit::kernels
