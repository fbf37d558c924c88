// Parallel kernels against the serial reference on randomly drawn geometries.
#include "doctest.h"
#include "semsplit/kernels.hpp"
#include "test_helpers.hpp"

using namespace semsplit;
using semsplit::test::max_abs_diff;
using semsplit::test::random_tensor;

namespace {

struct Grads {
  Tensor dx, dw, db;
};

}  // namespace

TEST_CASE("gemm: parallel matches reference for all transpose combinations") {
  Rng rng(1);
  for (int trial = 0; trial < 8; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 9), n = 1 + static_cast<int>(rng() % 9), k = 1 + static_cast<int>(rng() % 9);
    const bool ta = trial & 1, tb = trial & 2, acc = trial & 4;
    Tensor a = random_tensor({m * k}, rng), b = random_tensor({k * n}, rng);
    Tensor c0 = random_tensor({m * n}, rng), c1 = c0;
    kernels::ref::gemm(m, n, k, a.span(), ta, b.span(), tb, c0.span(), acc);
    kernels::par::gemm(m, n, k, a.span(), ta, b.span(), tb, c1.span(), acc);
    CHECK(max_abs_diff(c0, c1) < 1e-12);
  }
}

TEST_CASE("conv2d: parallel matches reference (forward and backward)") {
  Rng rng(2);
  const kernels::ConvGeom geoms[] = {
      {2, 3, 8, 8, 4, 4, 2, 1},  // stride-2 downsampling
      {3, 5, 6, 6, 7, 1, 1, 0},  // pointwise
      {1, 2, 7, 5, 3, 3, 1, 1},  // odd sizes
      {2, 1, 9, 9, 2, 3, 2, 0},
  };
  for (const auto& g : geoms) {
    Tensor x = random_tensor({g.batch, g.in_ch, g.in_h, g.in_w}, rng);
    Tensor w = random_tensor({g.out_ch, g.in_ch, g.kernel, g.kernel}, rng);
    Tensor b = random_tensor({g.out_ch}, rng);
    Tensor y0({g.batch, g.out_ch, g.out_h(), g.out_w()}), y1 = y0;
    kernels::ref::conv2d_forward(g, x.span(), w.span(), b.span(), y0.span());
    kernels::par::conv2d_forward(g, x.span(), w.span(), b.span(), y1.span());
    CHECK(max_abs_diff(y0, y1) < 1e-12);

    Tensor dy = random_tensor(y0.shape(), rng);
    Grads r{Tensor(x.shape()), Tensor(w.shape()), Tensor(b.shape())}, p = r;
    kernels::ref::conv2d_backward(g, x.span(), w.span(), dy.span(), r.dx.span(), r.dw.span(), r.db.span());
    kernels::par::conv2d_backward(g, x.span(), w.span(), dy.span(), p.dx.span(), p.dw.span(), p.db.span());
    CHECK(max_abs_diff(r.dx, p.dx) < 1e-12);
    CHECK(max_abs_diff(r.dw, p.dw) < 1e-12);
    CHECK(max_abs_diff(r.db, p.db) < 1e-12);
  }
}

TEST_CASE("conv_transpose2d: parallel matches reference and doubles resolution") {
  Rng rng(3);
  const kernels::TransposeGeom geoms[] = {
      {2, 3, 4, 4, 5, 4, 2, 1},
      {1, 2, 1, 1, 3, 4, 2, 1},
      {2, 4, 3, 5, 2, 3, 1, 1},
  };
  CHECK(geoms[0].out_h() == 8);
  for (const auto& g : geoms) {
    Tensor x = random_tensor({g.batch, g.in_ch, g.in_h, g.in_w}, rng);
    Tensor w = random_tensor({g.in_ch, g.out_ch, g.kernel, g.kernel}, rng);
    Tensor b = random_tensor({g.out_ch}, rng);
    Tensor y0({g.batch, g.out_ch, g.out_h(), g.out_w()}), y1 = y0;
    kernels::ref::conv_transpose2d_forward(g, x.span(), w.span(), b.span(), y0.span());
    kernels::par::conv_transpose2d_forward(g, x.span(), w.span(), b.span(), y1.span());
    CHECK(max_abs_diff(y0, y1) < 1e-12);

    Tensor dy = random_tensor(y0.shape(), rng);
    Grads r{Tensor(x.shape()), Tensor(w.shape()), Tensor(b.shape())}, p = r;
    kernels::ref::conv_transpose2d_backward(g, x.span(), w.span(), dy.span(), r.dx.span(), r.dw.span(), r.db.span());
    kernels::par::conv_transpose2d_backward(g, x.span(), w.span(), dy.span(), p.dx.span(), p.dw.span(), p.db.span());
    CHECK(max_abs_diff(r.dx, p.dx) < 1e-12);
    CHECK(max_abs_diff(r.dw, p.dw) < 1e-12);
    CHECK(max_abs_diff(r.db, p.db) < 1e-12);
  }
}

TEST_CASE("depthwise conv: parallel matches reference") {
  Rng rng(4);
  const kernels::DepthwiseGeom geoms[] = {
      {2, 3, 8, 8, 7, 1, 3},
      {1, 4, 4, 4, 7, 1, 3},  // kernel wider than the image
      {2, 2, 9, 6, 3, 2, 1},
  };
  for (const auto& g : geoms) {
    Tensor x = random_tensor({g.batch, g.ch, g.in_h, g.in_w}, rng);
    Tensor w = random_tensor({g.ch, 1, g.kernel, g.kernel}, rng);
    Tensor b = random_tensor({g.ch}, rng);
    Tensor y0({g.batch, g.ch, g.out_h(), g.out_w()}), y1 = y0;
    kernels::ref::depthwise_conv2d_forward(g, x.span(), w.span(), b.span(), y0.span());
    kernels::par::depthwise_conv2d_forward(g, x.span(), w.span(), b.span(), y1.span());
    CHECK(max_abs_diff(y0, y1) < 1e-12);

    Tensor dy = random_tensor(y0.shape(), rng);
    Grads r{Tensor(x.shape()), Tensor(w.shape()), Tensor(b.shape())}, p = r;
    kernels::ref::depthwise_conv2d_backward(g, x.span(), w.span(), dy.span(), r.dx.span(), r.dw.span(), r.db.span());
    kernels::par::depthwise_conv2d_backward(g, x.span(), w.span(), dy.span(), p.dx.span(), p.dw.span(), p.db.span());
    CHECK(max_abs_diff(r.dx, p.dx) < 1e-12);
    CHECK(max_abs_diff(r.dw, p.dw) < 1e-12);
    CHECK(max_abs_diff(r.db, p.db) < 1e-12);
  }
}

TEST_CASE("backward kernels accumulate instead of overwriting") {
  Rng rng(5);
  const kernels::ConvGeom g{1, 2, 4, 4, 2, 3, 1, 1};
  Tensor x = random_tensor({1, 2, 4, 4}, rng), w = random_tensor({2, 2, 3, 3}, rng);
  Tensor dy = random_tensor({1, 2, 4, 4}, rng);
  Tensor once(x.shape()), twice(x.shape());
  kernels::par::conv2d_backward(g, x.span(), w.span(), dy.span(), once.span(), {}, {});
  kernels::par::conv2d_backward(g, x.span(), w.span(), dy.span(), twice.span(), {}, {});
  kernels::par::conv2d_backward(g, x.span(), w.span(), dy.span(), twice.span(), {}, {});
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(2 * once[i]).epsilon(1e-12));
}
