// SPDX-License-Identifier: Apache-2.0
// Production kernels: im2col lowering onto Eigen GEMM, OpenMP over samples/channels.
#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "semsplit/kernels.hpp"

namespace semsplit::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace par {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Lowest/highest output index o with 0 <= o*stride - pad + k < in_len.
inline int lo_index(int pad, int k, int stride) {
  const int num = pad - k;
  return num <= 0 ? 0 : (num + stride - 1) / stride;
}
inline int hi_index(int in_len, int pad, int k, int stride, int out_len) {
  const int num = in_len - 1 + pad - k;
  if (num < 0) return -1;
  return std::min(out_len - 1, num / stride);
}

// col[(c*k + ki)*k + kj][oh*ow_n + ow] = x[c][oh*s-p+ki][ow*s-p+kj]
void im2col(const double* x, int ch, int h, int w, int k, int s, int p, int oh_n, int ow_n, double* col) {
  const std::size_t plane = static_cast<std::size_t>(oh_n) * ow_n;
  for (int c = 0; c < ch; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * plane;
        const int ow_lo = lo_index(p, kj, s), ow_hi = hi_index(w, p, kj, s, ow_n);
        for (int oh = 0; oh < oh_n; ++oh) {
          double* dst = row + static_cast<std::size_t>(oh) * ow_n;
          const int ih = oh * s - p + ki;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + ow_n, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < ow_lo; ++ow) dst[ow] = 0.0;
          for (int ow = ow_lo; ow <= ow_hi; ++ow) dst[ow] = src[ow * s - p + kj];
          for (int ow = std::max(ow_lo, ow_hi + 1); ow < ow_n; ++ow) dst[ow] = 0.0;
        }
      }
    }
  }
}

// Adjoint of im2col: x += scatter(col).
void col2im(const double* col, int ch, int h, int w, int k, int s, int p, int oh_n, int ow_n, double* x) {
  const std::size_t plane = static_cast<std::size_t>(oh_n) * ow_n;
  for (int c = 0; c < ch; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * plane;
        const int ow_lo = lo_index(p, kj, s), ow_hi = hi_index(w, p, kj, s, ow_n);
        for (int oh = 0; oh < oh_n; ++oh) {
          const int ih = oh * s - p + ki;
          if (ih < 0 || ih >= h) continue;
          const double* src = row + static_cast<std::size_t>(oh) * ow_n;
          double* dst = xc + static_cast<std::size_t>(ih) * w;
          for (int ow = ow_lo; ow <= ow_hi; ++ow) dst[ow * s - p + kj] += src[ow];
        }
      }
    }
  }
}

void add_bias_planes(double* y, const double* b, int ch, std::size_t plane) {
  for (int c = 0; c < ch; ++c) {
    double* yc = y + static_cast<std::size_t>(c) * plane;
    const double bv = b[c];
    for (std::size_t i = 0; i < plane; ++i) yc[i] += bv;
  }
}

void accumulate_bias_grad(const double* dy, double* db, int ch, std::size_t plane) {
  for (int c = 0; c < ch; ++c) {
    const double* g = dy + static_cast<std::size_t>(c) * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += g[i];
    db[c] += acc;
  }
}

}  // namespace

void gemm(int m, int n, int k, In a, bool trans_a, In b, bool trans_b, Out c, bool accumulate) {
  CMapMat am(a.data(), trans_a ? k : m, trans_a ? m : k);
  CMapMat bm(b.data(), trans_b ? n : k, trans_b ? k : n);
  MapMat cm(c.data(), m, n);
  if (!accumulate) cm.setZero();
  if (trans_a && trans_b) {
    cm.noalias() += am.transpose() * bm.transpose();
  } else if (trans_a) {
    cm.noalias() += am.transpose() * bm;
  } else if (trans_b) {
    cm.noalias() += am * bm.transpose();
  } else {
    cm.noalias() += am * bm;
  }
}

void conv2d_forward(const ConvGeom& g, In x, In w, In b, Out y) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh_n) * ow_n;
  const int ckk = g.in_ch * g.kernel * g.kernel;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.pad == 0;
  CMapMat wm(w.data(), g.out_ch, ckk);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    const double* xn = x.data() + n * g.in_ch * in_plane;
    MapMat yn(y.data() + n * g.out_ch * out_plane, g.out_ch, static_cast<Eigen::Index>(out_plane));
    if (pointwise) {
      yn.noalias() = wm * CMapMat(xn, g.in_ch, static_cast<Eigen::Index>(in_plane));
    } else {
      std::vector<double> col(static_cast<std::size_t>(ckk) * out_plane);
      im2col(xn, g.in_ch, g.in_h, g.in_w, g.kernel, g.stride, g.pad, oh_n, ow_n, col.data());
      yn.noalias() = wm * CMapMat(col.data(), ckk, static_cast<Eigen::Index>(out_plane));
    }
    if (!b.empty()) add_bias_planes(yn.data(), b.data(), g.out_ch, out_plane);
  }
}

void conv2d_backward(const ConvGeom& g, In x, In w, In dy, Out dx, Out dw, Out db) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh_n) * ow_n;
  const int ckk = g.in_ch * g.kernel * g.kernel;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.pad == 0;
  CMapMat wm(w.data(), g.out_ch, ckk);

  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      CMapMat dyn(dy.data() + n * g.out_ch * out_plane, g.out_ch, static_cast<Eigen::Index>(out_plane));
      double* dxn = dx.data() + n * g.in_ch * in_plane;
      if (pointwise) {
        MapMat(dxn, g.in_ch, static_cast<Eigen::Index>(in_plane)).noalias() += wm.transpose() * dyn;
      } else {
        std::vector<double> col(static_cast<std::size_t>(ckk) * out_plane);
        MapMat(col.data(), ckk, static_cast<Eigen::Index>(out_plane)).noalias() = wm.transpose() * dyn;
        col2im(col.data(), g.in_ch, g.in_h, g.in_w, g.kernel, g.stride, g.pad, oh_n, ow_n, dxn);
      }
    }
  }

  // Weight/bias reductions run in sample order so results do not depend on thread count.
  if (!dw.empty() || !db.empty()) {
    std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(ckk) * out_plane);
    for (int n = 0; n < g.batch; ++n) {
      const double* dyp = dy.data() + n * g.out_ch * out_plane;
      if (!db.empty()) accumulate_bias_grad(dyp, db.data(), g.out_ch, out_plane);
      if (dw.empty()) continue;
      CMapMat dyn(dyp, g.out_ch, static_cast<Eigen::Index>(out_plane));
      MapMat dwm(dw.data(), g.out_ch, ckk);
      const double* xn = x.data() + n * g.in_ch * in_plane;
      if (pointwise) {
        dwm.noalias() += dyn * CMapMat(xn, g.in_ch, static_cast<Eigen::Index>(in_plane)).transpose();
      } else {
        im2col(xn, g.in_ch, g.in_h, g.in_w, g.kernel, g.stride, g.pad, oh_n, ow_n, col.data());
        dwm.noalias() += dyn * CMapMat(col.data(), ckk, static_cast<Eigen::Index>(out_plane)).transpose();
      }
    }
  }
}

// A transposed convolution is the adjoint of the convolution mapping the
// output grid (out_h x out_w) onto the input grid (in_h x in_w).
void conv_transpose2d_forward(const TransposeGeom& g, In x, In w, In b, Out y) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh_n) * ow_n;
  const int okk = g.out_ch * g.kernel * g.kernel;
  CMapMat wm(w.data(), g.in_ch, okk);

#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    std::vector<double> col(static_cast<std::size_t>(okk) * in_plane);
    MapMat(col.data(), okk, static_cast<Eigen::Index>(in_plane)).noalias() =
        wm.transpose() * CMapMat(x.data() + n * g.in_ch * in_plane, g.in_ch, static_cast<Eigen::Index>(in_plane));
    double* yn = y.data() + n * g.out_ch * out_plane;
    std::fill(yn, yn + g.out_ch * out_plane, 0.0);
    col2im(col.data(), g.out_ch, oh_n, ow_n, g.kernel, g.stride, g.pad, g.in_h, g.in_w, yn);
    if (!b.empty()) add_bias_planes(yn, b.data(), g.out_ch, out_plane);
  }
}

void conv_transpose2d_backward(const TransposeGeom& g, In x, In w, In dy, Out dx, Out dw, Out db) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh_n) * ow_n;
  const int okk = g.out_ch * g.kernel * g.kernel;
  CMapMat wm(w.data(), g.in_ch, okk);

  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      std::vector<double> col(static_cast<std::size_t>(okk) * in_plane);
      im2col(dy.data() + n * g.out_ch * out_plane, g.out_ch, oh_n, ow_n, g.kernel, g.stride, g.pad, g.in_h, g.in_w,
             col.data());
      MapMat(dx.data() + n * g.in_ch * in_plane, g.in_ch, static_cast<Eigen::Index>(in_plane)).noalias() +=
          wm * CMapMat(col.data(), okk, static_cast<Eigen::Index>(in_plane));
    }
  }

  if (!dw.empty() || !db.empty()) {
    std::vector<double> col(static_cast<std::size_t>(okk) * in_plane);
    for (int n = 0; n < g.batch; ++n) {
      const double* dyn = dy.data() + n * g.out_ch * out_plane;
      if (!db.empty()) accumulate_bias_grad(dyn, db.data(), g.out_ch, out_plane);
      if (dw.empty()) continue;
      im2col(dyn, g.out_ch, oh_n, ow_n, g.kernel, g.stride, g.pad, g.in_h, g.in_w, col.data());
      MapMat(dw.data(), g.in_ch, okk).noalias() +=
          CMapMat(x.data() + n * g.in_ch * in_plane, g.in_ch, static_cast<Eigen::Index>(in_plane)) *
          CMapMat(col.data(), okk, static_cast<Eigen::Index>(in_plane)).transpose();
    }
  }
}

namespace {

// Zero-bordered copy of one plane. The buffer carries `k` trailing zeros so the
// wide-row tap loops below may run past the last padded row.
void pad_plane(const double* src, int h, int w, int p, int k, double* dst) {
  const int pw = w + 2 * p;
  std::fill(dst, dst + static_cast<std::size_t>(h + 2 * p) * pw + k, 0.0);
  for (int i = 0; i < h; ++i) std::copy_n(src + static_cast<std::size_t>(i) * w, w, dst + (i + p) * pw + p);
}

// Stride-1 depthwise kernels work on "wide" output rows of padded width pw:
// for tap (ki, kj), ywide[i] += w * xpad[i + ki*pw + kj] over i < oh_n*pw.
// Columns ow >= ow_n of ywide are scratch and discarded.
void depthwise_forward_s1(const double* xpad, int pw, const double* wc, int k, int oh_n, double* ywide) {
  const int len = oh_n * pw;
  for (int ki = 0; ki < k; ++ki) {
    for (int kj = 0; kj < k; ++kj) {
      const double wv = wc[ki * k + kj];
      const double* xs = xpad + ki * pw + kj;
#pragma omp simd
      for (int i = 0; i < len; ++i) ywide[i] += wv * xs[i];
    }
  }
}

}  // namespace

void depthwise_conv2d_forward(const DepthwiseGeom& g, In x, In w, In b, Out y) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const int k = g.kernel, s = g.stride, p = g.pad;
  const int planes = g.batch * g.ch;
  const int ph = g.in_h + 2 * p, pw = g.in_w + 2 * p;
  const bool wide = s == 1;

#pragma omp parallel
  {
    std::vector<double> xpad(wide ? static_cast<std::size_t>(ph) * pw + k : 0);
    std::vector<double> ywide(wide ? static_cast<std::size_t>(oh_n) * pw : 0);
#pragma omp for schedule(static)
    for (int nc = 0; nc < planes; ++nc) {
      const int c = nc % g.ch;
      const double* xp = x.data() + static_cast<std::size_t>(nc) * g.in_h * g.in_w;
      double* yp = y.data() + static_cast<std::size_t>(nc) * oh_n * ow_n;
      const double* wc = w.data() + static_cast<std::size_t>(c) * k * k;
      const double bias = b.empty() ? 0.0 : b[c];
      if (wide) {
        pad_plane(xp, g.in_h, g.in_w, p, k, xpad.data());
        std::fill(ywide.begin(), ywide.end(), bias);
        depthwise_forward_s1(xpad.data(), pw, wc, k, oh_n, ywide.data());
        for (int oh = 0; oh < oh_n; ++oh) std::copy_n(ywide.data() + static_cast<std::size_t>(oh) * pw, ow_n, yp + static_cast<std::size_t>(oh) * ow_n);
        continue;
      }
      std::fill(yp, yp + static_cast<std::size_t>(oh_n) * ow_n, bias);
      for (int oh = 0; oh < oh_n; ++oh) {
        double* yrow = yp + static_cast<std::size_t>(oh) * ow_n;
        for (int ki = 0; ki < k; ++ki) {
          const int ih = oh * s - p + ki;
          if (ih < 0 || ih >= g.in_h) continue;
          const double* xrow = xp + static_cast<std::size_t>(ih) * g.in_w;
          for (int kj = 0; kj < k; ++kj) {
            const double wv = wc[ki * k + kj];
            const int lo = lo_index(p, kj, s), hi = hi_index(g.in_w, p, kj, s, ow_n);
            for (int ow = lo; ow <= hi; ++ow) yrow[ow] += wv * xrow[ow * s - p + kj];
          }
        }
      }
    }
  }
}

void depthwise_conv2d_backward(const DepthwiseGeom& g, In x, In w, In dy, Out dx, Out dw, Out db) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const int k = g.kernel, s = g.stride, p = g.pad;
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh_n) * ow_n;
  const int ph = g.in_h + 2 * p, pw = g.in_w + 2 * p;
  const bool wide = s == 1;

  // One channel per task: dw/db for a channel are summed over samples in order.
#pragma omp parallel
  {
    const std::size_t pad_len = wide ? static_cast<std::size_t>(ph) * pw + k : 0;
    std::vector<double> xpad(pad_len), dxpad(pad_len);
    std::vector<double> gwide(wide ? static_cast<std::size_t>(oh_n) * pw : 0, 0.0);
    const int len = oh_n * pw;
#pragma omp for schedule(static)
    for (int c = 0; c < g.ch; ++c) {
      const double* wc = w.data() + static_cast<std::size_t>(c) * k * k;
      double* dwc = dw.empty() ? nullptr : dw.data() + static_cast<std::size_t>(c) * k * k;
      for (int n = 0; n < g.batch; ++n) {
        const std::size_t plane = static_cast<std::size_t>(n) * g.ch + c;
        const double* xp = x.data() + plane * in_plane;
        const double* gp = dy.data() + plane * out_plane;
        if (!db.empty()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < out_plane; ++i) acc += gp[i];
          db[c] += acc;
        }
        if (wide) {
          // Scratch columns of gwide stay zero, so they contribute nothing.
          for (int oh = 0; oh < oh_n; ++oh) std::copy_n(gp + static_cast<std::size_t>(oh) * ow_n, ow_n, gwide.data() + static_cast<std::size_t>(oh) * pw);
          if (dwc) pad_plane(xp, g.in_h, g.in_w, p, k, xpad.data());
          if (!dx.empty()) std::fill(dxpad.begin(), dxpad.end(), 0.0);
          const double* gw = gwide.data();
          for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
              const std::size_t off = static_cast<std::size_t>(ki) * pw + kj;
              if (dwc) {
                const double* xs = xpad.data() + off;
                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                for (int i = 0; i < len; ++i) acc += gw[i] * xs[i];
                dwc[ki * k + kj] += acc;
              }
              if (!dx.empty()) {
                const double wv = wc[ki * k + kj];
                double* ds = dxpad.data() + off;
#pragma omp simd
                for (int i = 0; i < len; ++i) ds[i] += wv * gw[i];
              }
            }
          }
          if (!dx.empty()) {
            double* dxp = dx.data() + plane * in_plane;
            for (int i = 0; i < g.in_h; ++i) {
              const double* src = dxpad.data() + static_cast<std::size_t>(i + p) * pw + p;
              double* dst = dxp + static_cast<std::size_t>(i) * g.in_w;
              for (int j = 0; j < g.in_w; ++j) dst[j] += src[j];
            }
          }
          continue;
        }
        for (int oh = 0; oh < oh_n; ++oh) {
          const double* grow = gp + static_cast<std::size_t>(oh) * ow_n;
          for (int ki = 0; ki < k; ++ki) {
            const int ih = oh * s - p + ki;
            if (ih < 0 || ih >= g.in_h) continue;
            const double* xrow = xp + static_cast<std::size_t>(ih) * g.in_w;
            double* dxrow = dx.empty() ? nullptr : dx.data() + plane * in_plane + static_cast<std::size_t>(ih) * g.in_w;
            for (int kj = 0; kj < k; ++kj) {
              const int lo = lo_index(p, kj, s), hi = hi_index(g.in_w, p, kj, s, ow_n);
              if (dwc) {
                double acc = 0.0;
                for (int ow = lo; ow <= hi; ++ow) acc += grow[ow] * xrow[ow * s - p + kj];
                dwc[ki * k + kj] += acc;
              }
              if (dxrow) {
                const double wv = wc[ki * k + kj];
                for (int ow = lo; ow <= hi; ++ow) dxrow[ow * s - p + kj] += wv * grow[ow];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace par
}  // namespace semsplit::kernels
