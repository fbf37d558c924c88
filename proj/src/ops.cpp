// SPDX-License-Identifier: Apache-2.0
#include "semsplit/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "semsplit/error.hpp"
#include "semsplit/kernels.hpp"

namespace semsplit::ag {

namespace {

std::atomic<Backend> g_backend{Backend::Parallel};

Tensor* pgrad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

kernels::Out out_or_empty(Tensor* t) { return t ? t->span() : kernels::Out{}; }

const Tensor& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }

void check_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InputError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_rank(const Var& a, int rank, const char* op) {
  if (a.value().rank() != rank) {
    throw InputError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

void gemm(int m, int n, int k, kernels::In a, bool ta, kernels::In b, bool tb, kernels::Out c, bool acc) {
  if (g_backend.load() == Backend::Reference) {
    kernels::ref::gemm(m, n, k, a, ta, b, tb, c, acc);
  } else {
    kernels::par::gemm(m, n, k, a, ta, b, tb, c, acc);
  }
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (Tensor* g = pgrad(self, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = pgrad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = pval(self, 0);
    const Tensor& bv = pval(self, 1);
    if (Tensor* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (Tensor* g = pgrad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make_result(std::move(out), {a}, [](Node& self) {
    const Tensor& x = pval(self, 0);
    Tensor& g = *pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().vec()) acc += v;
  return make_result(Tensor::scalar(acc), {a}, [](Node& self) {
    Tensor& g = *pgrad(self, 0);
    const double s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(const Var& a) {
  require(a.size() > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var concat0(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat0 of nothing");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  int rows = 0;
  for (const auto& p : parts) {
    require(Shape(p.shape().begin() + 1, p.shape().end()) == tail, "concat0: trailing shapes differ");
    rows += p.dim(0);
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().vec().begin(), p.value().vec().end(), out.data() + off);
    off += p.size();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (Tensor* g = pgrad(self, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[p] + i];
      }
    }
  });
}

Var gather0(const Var& a, const std::vector<int>& index) {
  const std::size_t row = a.size() / static_cast<std::size_t>(a.dim(0));
  Shape shape = a.shape();
  shape[0] = static_cast<int>(index.size());
  Tensor out(shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < a.dim(0), "gather0: index out of range");
    std::copy_n(a.value().data() + index[r] * row, row, out.data() + r * row);
  }
  return make_result(std::move(out), {a}, [index, row](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (std::size_t r = 0; r < index.size(); ++r) {
      for (std::size_t j = 0; j < row; ++j) g[index[r] * row + j] += self.grad[r * row + j];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const int rows = parts[0].dim(0);
  int cols = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_cols");
    require(p.dim(0) == rows, "concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  Tensor out(Shape{rows, cols});
  int c0 = 0;
  for (const auto& p : parts) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < p.dim(1); ++c) out.at(r, c0 + c) = p.value().at(r, c);
    }
    c0 += p.dim(1);
  }
  return make_result(std::move(out), parts, [widths, rows](Node& self) {
    int c0 = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (Tensor* g = pgrad(self, p)) {
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < widths[p]; ++c) g->at(r, c) += self.grad.at(r, c0 + c);
        }
      }
      c0 += widths[p];
    }
  });
}

Var slice_cols(const Var& a, int begin, int end) {
  check_rank(a, 2, "slice_cols");
  require(0 <= begin && begin <= end && end <= a.dim(1), "slice_cols: bad range");
  const int rows = a.dim(0);
  Tensor out(Shape{rows, end - begin});
  for (int r = 0; r < rows; ++r) {
    for (int c = begin; c < end; ++c) out.at(r, c - begin) = a.value().at(r, c);
  }
  return make_result(std::move(out), {a}, [begin, end, rows](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (int r = 0; r < rows; ++r) {
      for (int c = begin; c < end; ++c) g.at(r, c) += self.grad.at(r, c - begin);
    }
  });
}

Var transpose(const Var& a) {
  check_rank(a, 2, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n, m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.at(j, i) = a.value().at(i, j);
  }
  return make_result(std::move(out), {a}, [m, n](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) g.at(i, j) += self.grad.at(j, i);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out(Shape{m, n});
  gemm(m, n, k, a.value().span(), false, b.value().span(), false, out.span(), false);
  return make_result(std::move(out), {a, b}, [m, n, k](Node& self) {
    if (Tensor* g = pgrad(self, 0)) gemm(m, k, n, self.grad.span(), false, pval(self, 1).span(), true, g->span(), true);
    if (Tensor* g = pgrad(self, 1)) gemm(k, n, m, pval(self, 0).span(), true, self.grad.span(), false, g->span(), true);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  check_rank(x, 2, "linear");
  check_rank(w, 2, "linear");
  const int rows = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  require(w.dim(1) == in, "linear: input width " + std::to_string(in) + " vs weight " + shape_str(w.shape()));
  require(b.size() == static_cast<std::size_t>(out_dim), "linear: bias size mismatch");
  Tensor out(Shape{rows, out_dim});
  gemm(rows, out_dim, in, x.value().span(), false, w.value().span(), true, out.span(), false);
  for (int r = 0; r < rows; ++r) {
    for (int o = 0; o < out_dim; ++o) out.at(r, o) += b.value()[o];
  }
  return make_result(std::move(out), {x, w, b}, [rows, in, out_dim](Node& self) {
    if (Tensor* g = pgrad(self, 0)) {
      gemm(rows, in, out_dim, self.grad.span(), false, pval(self, 1).span(), false, g->span(), true);
    }
    if (Tensor* g = pgrad(self, 1)) {
      gemm(out_dim, in, rows, self.grad.span(), true, pval(self, 0).span(), false, g->span(), true);
    }
    if (Tensor* g = pgrad(self, 2)) {
      for (int r = 0; r < rows; ++r) {
        for (int o = 0; o < out_dim; ++o) (*g)[o] += self.grad.at(r, o);
      }
    }
  });
}

Var softmax_rows(const Var& a) {
  check_rank(a, 2, "softmax_rows");
  const int rows = a.dim(0), cols = a.dim(1);
  Tensor out = a.value();
  for (int r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, out.at(r, c));
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  return make_result(std::move(out), {a}, [rows, cols](Node& self) {
    Tensor& g = *pgrad(self, 0);
    const Tensor& y = self.value;
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += self.grad.at(r, c) * y.at(r, c);
      for (int c = 0; c < cols; ++c) g.at(r, c) += y.at(r, c) * (self.grad.at(r, c) - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_rank(x, 2, "layer_norm");
  const int rows = x.dim(0), d = x.dim(1);
  require(gamma.size() == static_cast<std::size_t>(d) && beta.size() == static_cast<std::size_t>(d),
          "layer_norm: affine size mismatch");
  Tensor xhat(Shape{rows, d});
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  Tensor out(Shape{rows, d});
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < d; ++c) mu += x.value().at(r, c);
    mu /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double t = x.value().at(r, c) - mu;
      var += t * t;
    }
    var /= d;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < d; ++c) {
      xhat.at(r, c) = (x.value().at(r, c) - mu) * inv_std[r];
      out.at(r, c) = xhat.at(r, c) * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& self) {
                       const Tensor& gam = pval(self, 1);
                       Tensor* gx = pgrad(self, 0);
                       Tensor* gg = pgrad(self, 1);
                       Tensor* gb = pgrad(self, 2);
                       for (int r = 0; r < rows; ++r) {
                         double s1 = 0.0, s2 = 0.0;
                         for (int c = 0; c < d; ++c) {
                           const double dyv = self.grad.at(r, c);
                           if (gg) (*gg)[c] += dyv * xhat.at(r, c);
                           if (gb) (*gb)[c] += dyv;
                           const double dxh = dyv * gam[c];
                           s1 += dxh;
                           s2 += dxh * xhat.at(r, c);
                         }
                         if (!gx) continue;
                         for (int c = 0; c < d; ++c) {
                           const double dxh = self.grad.at(r, c) * gam[c];
                           gx->at(r, c) += inv_std[r] / d * (d * dxh - s1 - xhat.at(r, c) * s2);
                         }
                       }
                     });
}

Var mean_rows(const Var& a) {
  check_rank(a, 2, "mean_rows");
  const int rows = a.dim(0), cols = a.dim(1);
  require(rows > 0, "mean_rows of empty matrix");
  Tensor out(Shape{1, cols});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[c] += a.value().at(r, c);
  }
  for (int c = 0; c < cols; ++c) out[c] /= rows;
  return make_result(std::move(out), {a}, [rows, cols](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) g.at(r, c) += self.grad[c] / rows;
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_rank(x, 4, "conv2d");
  check_rank(w, 4, "conv2d");
  require(w.dim(1) == x.dim(1), "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(w.dim(2) == w.dim(3), "conv2d: square kernels only");
  require(b.size() == static_cast<std::size_t>(w.dim(0)), "conv2d: bias size mismatch");
  const kernels::ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad};
  require(g.out_h() > 0 && g.out_w() > 0, "conv2d: empty output");
  Tensor out(Shape{g.batch, g.out_ch, g.out_h(), g.out_w()});
  if (backend() == Backend::Reference) {
    kernels::ref::conv2d_forward(g, x.value().span(), w.value().span(), b.value().span(), out.span());
  } else {
    kernels::par::conv2d_forward(g, x.value().span(), w.value().span(), b.value().span(), out.span());
  }
  return make_result(std::move(out), {x, w, b}, [g](Node& self) {
    auto fn = backend() == Backend::Reference ? kernels::ref::conv2d_backward : kernels::par::conv2d_backward;
    fn(g, pval(self, 0).span(), pval(self, 1).span(), self.grad.span(), out_or_empty(pgrad(self, 0)),
       out_or_empty(pgrad(self, 1)), out_or_empty(pgrad(self, 2)));
  });
}

Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_rank(x, 4, "depthwise_conv2d");
  check_rank(w, 4, "depthwise_conv2d");
  require(w.dim(0) == x.dim(1) && w.dim(1) == 1, "depthwise_conv2d: weight must be [C,1,k,k]");
  require(b.size() == static_cast<std::size_t>(x.dim(1)), "depthwise_conv2d: bias size mismatch");
  const kernels::DepthwiseGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(2), stride, pad};
  Tensor out(Shape{g.batch, g.ch, g.out_h(), g.out_w()});
  if (backend() == Backend::Reference) {
    kernels::ref::depthwise_conv2d_forward(g, x.value().span(), w.value().span(), b.value().span(), out.span());
  } else {
    kernels::par::depthwise_conv2d_forward(g, x.value().span(), w.value().span(), b.value().span(), out.span());
  }
  return make_result(std::move(out), {x, w, b}, [g](Node& self) {
    auto fn = backend() == Backend::Reference ? kernels::ref::depthwise_conv2d_backward
                                              : kernels::par::depthwise_conv2d_backward;
    fn(g, pval(self, 0).span(), pval(self, 1).span(), self.grad.span(), out_or_empty(pgrad(self, 0)),
       out_or_empty(pgrad(self, 1)), out_or_empty(pgrad(self, 2)));
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_rank(x, 4, "conv_transpose2d");
  check_rank(w, 4, "conv_transpose2d");
  require(w.dim(0) == x.dim(1), "conv_transpose2d: weight must be [C_in,C_out,k,k]");
  require(b.size() == static_cast<std::size_t>(w.dim(1)), "conv_transpose2d: bias size mismatch");
  const kernels::TransposeGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(1), w.dim(2), stride, pad};
  require(g.out_h() > 0 && g.out_w() > 0, "conv_transpose2d: empty output");
  Tensor out(Shape{g.batch, g.out_ch, g.out_h(), g.out_w()});
  if (backend() == Backend::Reference) {
    kernels::ref::conv_transpose2d_forward(g, x.value().span(), w.value().span(), b.value().span(), out.span());
  } else {
    kernels::par::conv_transpose2d_forward(g, x.value().span(), w.value().span(), b.value().span(), out.span());
  }
  return make_result(std::move(out), {x, w, b}, [g](Node& self) {
    auto fn = backend() == Backend::Reference ? kernels::ref::conv_transpose2d_backward
                                              : kernels::par::conv_transpose2d_backward;
    fn(g, pval(self, 0).span(), pval(self, 1).span(), self.grad.span(), out_or_empty(pgrad(self, 0)),
       out_or_empty(pgrad(self, 1)), out_or_empty(pgrad(self, 2)));
  });
}

Var grn(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_rank(x, 4, "grn");
  const int n_batch = x.dim(0), ch = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  require(gamma.size() == static_cast<std::size_t>(ch) && beta.size() == static_cast<std::size_t>(ch),
          "grn: affine size mismatch");
  std::vector<double> norms(static_cast<std::size_t>(n_batch) * ch);
  std::vector<double> scaled(norms.size());
  std::vector<double> denom(static_cast<std::size_t>(n_batch));
  const double* xv = x.value().data();
  for (int n = 0; n < n_batch; ++n) {
    double total = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double* p = xv + (static_cast<std::size_t>(n) * ch + c) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i] * p[i];
      norms[n * ch + c] = std::sqrt(s);
      total += norms[n * ch + c];
    }
    denom[n] = total / ch + eps;
    for (int c = 0; c < ch; ++c) scaled[n * ch + c] = norms[n * ch + c] / denom[n];
  }
  Tensor out(x.shape());
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * ch + c) * plane;
      const double gs = gamma.value()[c] * scaled[n * ch + c];
      const double bv = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = xv[base + i] * (1.0 + gs) + bv;
    }
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [norms = std::move(norms), scaled = std::move(scaled), denom = std::move(denom), n_batch, ch,
       plane](Node& self) {
        const Tensor& xt = pval(self, 0);
        const Tensor& gam = pval(self, 1);
        Tensor* gx = pgrad(self, 0);
        Tensor* gg = pgrad(self, 1);
        Tensor* gb = pgrad(self, 2);
        std::vector<double> d_scaled(static_cast<std::size_t>(ch));
        for (int n = 0; n < n_batch; ++n) {
          for (int c = 0; c < ch; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * ch + c) * plane;
            double gxdot = 0.0, gsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
              gxdot += self.grad[base + i] * xt[base + i];
              gsum += self.grad[base + i];
            }
            if (gg) (*gg)[c] += gxdot * scaled[n * ch + c];
            if (gb) (*gb)[c] += gsum;
            d_scaled[c] = gam[c] * gxdot;
          }
          if (!gx) continue;
          // scaled_c = norm_c / (mean(norm) + eps)
          double cross = 0.0;
          for (int c = 0; c < ch; ++c) cross += d_scaled[c] * norms[n * ch + c];
          cross /= denom[n] * denom[n] * ch;
          for (int c = 0; c < ch; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * ch + c) * plane;
            const double direct = 1.0 + gam[c] * scaled[n * ch + c];
            const double d_norm = d_scaled[c] / denom[n] - cross;
            const double nrm = norms[n * ch + c];
            const double via_norm = nrm > 0.0 ? d_norm / nrm : 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
              (*gx)[base + i] += self.grad[base + i] * direct + via_norm * xt[base + i];
            }
          }
        }
      });
}

Var max_pool2d(const Var& x, int kernel) {
  check_rank(x, 4, "max_pool2d");
  const int n_batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(kernel > 0 && h % kernel == 0 && w % kernel == 0,
          "max_pool2d: kernel " + std::to_string(kernel) + " does not divide " + shape_str(x.shape()));
  const int oh_n = h / kernel, ow_n = w / kernel;
  Tensor out(Shape{n_batch, ch, oh_n, ow_n});
  std::vector<std::size_t> argmax(out.size());
  const double* xv = x.value().data();
  std::size_t o = 0;
  for (int nc = 0; nc < n_batch * ch; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * h * w;
    for (int oh = 0; oh < oh_n; ++oh) {
      for (int ow = 0; ow < ow_n; ++ow, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oh * kernel) * w + ow * kernel;
        for (int ki = 0; ki < kernel; ++ki) {
          for (int kj = 0; kj < kernel; ++kj) {
            const std::size_t i = base + static_cast<std::size_t>(oh * kernel + ki) * w + ow * kernel + kj;
            if (xv[i] > xv[best]) best = i;
          }
        }
        argmax[o] = best;
        out[o] = xv[best];
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
  });
}

namespace {

struct Interp {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

Interp bilinear_axis(int in, int scale) {
  Interp t;
  const int out = in * scale;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) / scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    i0 = std::min(i0, in - 1);
    t.lo.push_back(i0);
    t.hi.push_back(std::min(i0 + 1, in - 1));
    t.frac.push_back(src - i0);
  }
  return t;
}

}  // namespace

Var upsample_bilinear(const Var& x, int scale) {
  check_rank(x, 4, "upsample_bilinear");
  require(scale >= 1, "upsample_bilinear: scale must be >= 1");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh_n = h * scale, ow_n = w * scale;
  const Interp ry = bilinear_axis(h, scale), rx = bilinear_axis(w, scale);
  Tensor out(Shape{x.dim(0), x.dim(1), oh_n, ow_n});
  const double* xv = x.value().data();
  for (int p = 0; p < planes; ++p) {
    const double* src = xv + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * oh_n * ow_n;
    for (int oy = 0; oy < oh_n; ++oy) {
      const double fy = ry.frac[oy];
      for (int ox = 0; ox < ow_n; ++ox) {
        const double fx = rx.frac[ox];
        const double top = (1 - fx) * src[ry.lo[oy] * w + rx.lo[ox]] + fx * src[ry.lo[oy] * w + rx.hi[ox]];
        const double bot = (1 - fx) * src[ry.hi[oy] * w + rx.lo[ox]] + fx * src[ry.hi[oy] * w + rx.hi[ox]];
        dst[oy * ow_n + ox] = (1 - fy) * top + fy * bot;
      }
    }
  }
  return make_result(std::move(out), {x}, [ry, rx, planes, h, w, oh_n, ow_n](Node& self) {
    Tensor& g = *pgrad(self, 0);
    for (int p = 0; p < planes; ++p) {
      double* dst = g.data() + static_cast<std::size_t>(p) * h * w;
      const double* src = self.grad.data() + static_cast<std::size_t>(p) * oh_n * ow_n;
      for (int oy = 0; oy < oh_n; ++oy) {
        const double fy = ry.frac[oy];
        for (int ox = 0; ox < ow_n; ++ox) {
          const double fx = rx.frac[ox];
          const double gv = src[oy * ow_n + ox];
          dst[ry.lo[oy] * w + rx.lo[ox]] += (1 - fy) * (1 - fx) * gv;
          dst[ry.lo[oy] * w + rx.hi[ox]] += (1 - fy) * fx * gv;
          dst[ry.hi[oy] * w + rx.lo[ox]] += fy * (1 - fx) * gv;
          dst[ry.hi[oy] * w + rx.hi[ox]] += fy * fx * gv;
        }
      }
    }
  });
}

}  // namespace semsplit::ag
