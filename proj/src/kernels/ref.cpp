// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels. Direct loops, no blocking; used to validate kernels::par.
#include <cstddef>

#include "semsplit/kernels.hpp"

namespace semsplit::kernels::ref {

namespace {

inline std::size_t idx4(int a, int b, int c, int d, int nb, int nc, int nd) {
  return ((static_cast<std::size_t>(a) * nb + b) * nc + c) * nd + d;
}

}  // namespace

void gemm(int m, int n, int k, In a, bool trans_a, In b, bool trans_b, Out c, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
        const double bv = trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        acc += av * bv;
      }
      double& out = c[static_cast<std::size_t>(i) * n + j];
      out = accumulate ? out + acc : acc;
    }
  }
}

void conv2d_forward(const ConvGeom& g, In x, In w, In b, Out y) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_ch; ++o)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          double acc = b.empty() ? 0.0 : b[o];
          for (int c = 0; c < g.in_ch; ++c)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int ih = oh * g.stride - g.pad + ki;
                const int iw = ow * g.stride - g.pad + kj;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                acc += w[idx4(o, c, ki, kj, g.in_ch, g.kernel, g.kernel)] *
                       x[idx4(n, c, ih, iw, g.in_ch, g.in_h, g.in_w)];
              }
          y[idx4(n, o, oh, ow, g.out_ch, oh_n, ow_n)] = acc;
        }
}

void conv2d_backward(const ConvGeom& g, In x, In w, In dy, Out dx, Out dw, Out db) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_ch; ++o)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          const double gy = dy[idx4(n, o, oh, ow, g.out_ch, oh_n, ow_n)];
          if (!db.empty()) db[o] += gy;
          for (int c = 0; c < g.in_ch; ++c)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int ih = oh * g.stride - g.pad + ki;
                const int iw = ow * g.stride - g.pad + kj;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                const std::size_t wi = idx4(o, c, ki, kj, g.in_ch, g.kernel, g.kernel);
                const std::size_t xi = idx4(n, c, ih, iw, g.in_ch, g.in_h, g.in_w);
                if (!dw.empty()) dw[wi] += gy * x[xi];
                if (!dx.empty()) dx[xi] += gy * w[wi];
              }
        }
}

// y[n,o,ih*s-p+ki, iw*s-p+kj] += x[n,c,ih,iw] * w[c,o,ki,kj]
void conv_transpose2d_forward(const TransposeGeom& g, In x, In w, In b, Out y) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_ch; ++o)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) y[idx4(n, o, oh, ow, g.out_ch, oh_n, ow_n)] = b.empty() ? 0.0 : b[o];
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.in_ch; ++c)
      for (int ih = 0; ih < g.in_h; ++ih)
        for (int iw = 0; iw < g.in_w; ++iw) {
          const double xv = x[idx4(n, c, ih, iw, g.in_ch, g.in_h, g.in_w)];
          for (int o = 0; o < g.out_ch; ++o)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int oh = ih * g.stride - g.pad + ki;
                const int ow = iw * g.stride - g.pad + kj;
                if (oh < 0 || oh >= oh_n || ow < 0 || ow >= ow_n) continue;
                y[idx4(n, o, oh, ow, g.out_ch, oh_n, ow_n)] += xv * w[idx4(c, o, ki, kj, g.out_ch, g.kernel, g.kernel)];
              }
        }
}

void conv_transpose2d_backward(const TransposeGeom& g, In x, In w, In dy, Out dx, Out dw, Out db) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  if (!db.empty()) {
    for (int n = 0; n < g.batch; ++n)
      for (int o = 0; o < g.out_ch; ++o)
        for (int oh = 0; oh < oh_n; ++oh)
          for (int ow = 0; ow < ow_n; ++ow) db[o] += dy[idx4(n, o, oh, ow, g.out_ch, oh_n, ow_n)];
  }
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.in_ch; ++c)
      for (int ih = 0; ih < g.in_h; ++ih)
        for (int iw = 0; iw < g.in_w; ++iw) {
          const std::size_t xi = idx4(n, c, ih, iw, g.in_ch, g.in_h, g.in_w);
          for (int o = 0; o < g.out_ch; ++o)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int oh = ih * g.stride - g.pad + ki;
                const int ow = iw * g.stride - g.pad + kj;
                if (oh < 0 || oh >= oh_n || ow < 0 || ow >= ow_n) continue;
                const double gy = dy[idx4(n, o, oh, ow, g.out_ch, oh_n, ow_n)];
                const std::size_t wi = idx4(c, o, ki, kj, g.out_ch, g.kernel, g.kernel);
                if (!dx.empty()) dx[xi] += gy * w[wi];
                if (!dw.empty()) dw[wi] += gy * x[xi];
              }
        }
}

void depthwise_conv2d_forward(const DepthwiseGeom& g, In x, In w, In b, Out y) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.ch; ++c)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          double acc = b.empty() ? 0.0 : b[c];
          for (int ki = 0; ki < g.kernel; ++ki)
            for (int kj = 0; kj < g.kernel; ++kj) {
              const int ih = oh * g.stride - g.pad + ki;
              const int iw = ow * g.stride - g.pad + kj;
              if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
              acc += w[idx4(c, 0, ki, kj, 1, g.kernel, g.kernel)] * x[idx4(n, c, ih, iw, g.ch, g.in_h, g.in_w)];
            }
          y[idx4(n, c, oh, ow, g.ch, oh_n, ow_n)] = acc;
        }
}

void depthwise_conv2d_backward(const DepthwiseGeom& g, In x, In w, In dy, Out dx, Out dw, Out db) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.ch; ++c)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          const double gy = dy[idx4(n, c, oh, ow, g.ch, oh_n, ow_n)];
          if (!db.empty()) db[c] += gy;
          for (int ki = 0; ki < g.kernel; ++ki)
            for (int kj = 0; kj < g.kernel; ++kj) {
              const int ih = oh * g.stride - g.pad + ki;
              const int iw = ow * g.stride - g.pad + kj;
              if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
              const std::size_t wi = idx4(c, 0, ki, kj, 1, g.kernel, g.kernel);
              const std::size_t xi = idx4(n, c, ih, iw, g.ch, g.in_h, g.in_w);
              if (!dw.empty()) dw[wi] += gy * x[xi];
              if (!dx.empty()) dx[xi] += gy * w[wi];
            }
        }
}

}  // namespace semsplit::kernels::ref
