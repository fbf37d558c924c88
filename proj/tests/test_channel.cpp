#include <cmath>

#include "doctest.h"
#include "semsplit/channel.hpp"
#include "semsplit/error.hpp"
#include "semsplit/gradcheck.hpp"
#include "semsplit/ops.hpp"
#include "test_helpers.hpp"

using namespace semsplit;
using semsplit::test::max_abs_diff;
using semsplit::test::normal_tensor;

namespace {

Tensor unit_power_rows(Tensor x) {
  const int L = x.dim(1);
  for (int r = 0; r < x.dim(0); ++r) {
    double e = 0.0;
    for (int i = 0; i < L; ++i) e += x.at(r, i) * x.at(r, i);
    const double s = std::sqrt(L / e);
    for (int i = 0; i < L; ++i) x.at(r, i) *= s;
  }
  return x;
}

GroupAssignment two_groups_of(int per_group) {
  std::vector<int> g;
  for (int k = 0; k < 2 * per_group; ++k) g.push_back(k % 2);
  return make_assignment(Tensor({2 * per_group, 2}), g);
}

}  // namespace

TEST_CASE("power normalization") {
  const Tensor y = power_normalize(Tensor({2}, std::vector<double>{3, 4}));
  CHECK(y[0] == doctest::Approx(3 * std::sqrt(2.0 / 25)));
  CHECK(y[1] == doctest::Approx(4 * std::sqrt(2.0 / 25)));
  CHECK(max_abs_diff(power_normalize(y), y) < 1e-9);
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const Tensor x = normal_tensor({37}, rng, 5.0);
    const Tensor n = power_normalize(x);
    double p = 0.0;
    for (double v : n.vec()) p += v * v;
    CHECK(std::abs(p / 37 - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(power_normalize(Tensor({4})), InputError);
  CHECK_THROWS_AS(ag::power_normalize_rows(ag::constant(Tensor({2, 3}))), InputError);
}

TEST_CASE("real and complex pairing") {
  const std::vector<double> x = {1, 2, 3, 4};
  const auto z = real_to_complex(x);
  REQUIRE(z.size() == 2);
  CHECK(z[0] == Complex(1, 2));
  CHECK(z[1] == Complex(3, 4));
  CHECK(complex_to_real(z) == x);
  double pr = 0.0, pc = 0.0;
  for (double v : x) pr += v * v;
  for (auto v : z) pc += std::norm(v);
  CHECK(pr / 4 == doctest::Approx(pc / (2 * 2)));
  CHECK_THROWS_AS(real_to_complex(std::vector<double>{1, 2, 3}), InputError);
}

TEST_CASE("snr to noise variance") {
  CHECK(snr_to_noise_var(0.0) == 1.0);
  CHECK(snr_to_noise_var(10.0) == doctest::Approx(0.1));
  CHECK(snr_to_noise_var(20.0) == doctest::Approx(0.01));
  CHECK(snr_to_noise_var(INFINITY) == 0.0);
}

TEST_CASE("channel model names") {
  CHECK(parse_channel_model("AWGN") == ChannelModel::AWGN);
  CHECK(parse_channel_model("rician") == ChannelModel::Rician);
  CHECK(parse_channel_model("Rayleigh") == ChannelModel::Rayleigh);
  CHECK_THROWS_AS(parse_channel_model("nakagami"), ConfigError);
  CHECK(to_string(ChannelModel::Rician) == "rician");
  Rng rng(0);
  CHECK_THROWS_AS(sample_channel(ChannelModel::Rician, 3, 0.0, 10.0, rng), ConfigError);
  CHECK_THROWS_AS(sample_channel(static_cast<ChannelModel>(7), 3, 1.0, 10.0, rng), ConfigError);
}

TEST_CASE("fading statistics") {
  Rng rng(123);
  const int n = 100000;
  const ChannelRealization awgn = sample_channel(ChannelModel::AWGN, 50, 1.0, 10.0, rng);
  for (auto h : awgn.h) CHECK(h == Complex(1.0, 0.0));

  const ChannelRealization ray = sample_channel(ChannelModel::Rayleigh, n, 1.0, 10.0, rng);
  double p = 0.0;
  for (auto h : ray.h) p += std::norm(h);
  CHECK(std::abs(p / n - 1.0) < 0.01);

  const ChannelRealization ric = sample_channel(ChannelModel::Rician, n, 1.0, 10.0, rng);
  double re = 0.0, im = 0.0, pw = 0.0;
  for (auto h : ric.h) {
    re += h.real();
    im += h.imag();
    pw += std::norm(h);
  }
  CHECK(std::abs(re / n / std::sqrt(0.5) - 1.0) < 0.01);
  CHECK(std::abs(im / n) < 0.01);
  CHECK(std::abs(pw / n - 1.0) < 0.02);
}

TEST_CASE("noiseless interference-free transmission is the identity") {
  Rng rng(5);
  for (ChannelModel m : {ChannelModel::AWGN, ChannelModel::Rician, ChannelModel::Rayleigh}) {
    CAPTURE(to_string(m));
    const Tensor P = unit_power_rows(normal_tensor({6, 40}, rng));
    const ChannelRealization ch = sample_channel(m, 6, 2.0, INFINITY, rng);
    CHECK(max_abs_diff(ag::transmit_private(ag::constant(P), ch, false, rng).value(), P) < 1e-6);

    const Tensor C = unit_power_rows(normal_tensor({2, 12}, rng));
    const GroupAssignment a = two_groups_of(3);
    const Tensor out = ag::transmit_common(ag::constant(C), a, ch, false, rng).value();
    for (int k = 0; k < 6; ++k)
      for (int i = 0; i < 12; ++i) CHECK(std::abs(out.at(k, i) - C.at(k % 2, i)) < 1e-6);

    // Arbitrary scale is removed by normalization.
    Tensor big = P;
    for (std::size_t i = 0; i < big.size(); ++i) big[i] *= 17.0;
    CHECK(max_abs_diff(ag::transmit_private(ag::constant(big), ch, false, rng).value(), P) < 1e-6);
  }
}

TEST_CASE("interference superimposes other blocks") {
  Rng rng(6);
  const ChannelRealization ch = sample_channel(ChannelModel::AWGN, 2, 1.0, INFINITY, rng);
  const Tensor C = unit_power_rows(normal_tensor({2, 8}, rng));
  const Tensor out = ag::transmit_common(ag::constant(C), two_groups_of(1), ch, true, rng).value();
  const Tensor P = unit_power_rows(normal_tensor({2, 8}, rng));
  const Tensor outp = ag::transmit_private(ag::constant(P), ch, true, rng).value();
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 8; ++i) {
      CHECK(out.at(k, i) == doctest::Approx(C.at(0, i) + C.at(1, i)));
      CHECK(outp.at(k, i) == doctest::Approx(P.at(0, i) + P.at(1, i)));
    }
  }
}

TEST_CASE("full interference makes every user's signal identical") {
  Rng rng(7);
  const ChannelRealization ch = sample_channel(ChannelModel::Rayleigh, 6, 1.0, INFINITY, rng);
  const Tensor P = normal_tensor({6, 10}, rng);
  const Tensor C = normal_tensor({2, 10}, rng);
  const Tensor outp = ag::transmit_private(ag::constant(P), ch, true, rng).value();
  const Tensor outc = ag::transmit_common(ag::constant(C), two_groups_of(3), ch, true, rng).value();
  for (int k = 1; k < 6; ++k) {
    for (int i = 0; i < 10; ++i) {
      CHECK(std::abs(outp.at(k, i) - outp.at(0, i)) < 1e-9);
      CHECK(std::abs(outc.at(k, i) - outc.at(0, i)) < 1e-9);
    }
  }
}

TEST_CASE("noise statistics and per-element SNR") {
  Rng rng(99);
  const int users = 10, L = 10000;  // 1e5 real elements
  const Tensor P = unit_power_rows(normal_tensor({users, L}, rng));
  for (double snr : {0.0, 12.0, 18.0}) {
    CAPTURE(snr);
    const ChannelRealization ch = sample_channel(ChannelModel::AWGN, users, 1.0, snr, rng);
    const Tensor out = ag::transmit_private(ag::constant(P), ch, false, rng).value();
    double noise = 0.0, signal = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      noise += (out[i] - P[i]) * (out[i] - P[i]);
      signal += P[i] * P[i];
    }
    const double var = noise / static_cast<double>(out.size());
    CHECK(std::abs(var / snr_to_noise_var(snr) - 1.0) < 0.01);
    CHECK(std::abs(10.0 * std::log10(signal / noise) - snr) < 0.2);
  }
}

TEST_CASE("transmit path gradients match finite differences") {
  Rng rng(41);
  for (ChannelModel m : {ChannelModel::AWGN, ChannelModel::Rayleigh}) {
    for (bool interference : {false, true}) {
      CAPTURE(to_string(m));
      CAPTURE(interference);
      Rng chrng(3);
      const ChannelRealization ch = sample_channel(m, 4, 1.0, 12.0, chrng);
      const Tensor W = normal_tensor({4, 16}, rng);
      std::vector<int> groups = {0, 1, 1, 0};
      const GroupAssignment a = make_assignment(Tensor({4, 2}), groups);
      const ScalarFn fn = [&](const std::vector<ag::Var>& v) {
        Rng noise(1234);  // identical noise for every evaluation
        const ag::Var rc = ag::transmit_common(v[0], a, ch, interference, noise);
        const ag::Var rp = ag::transmit_private(v[1], ch, interference, noise);
        return ag::sum(ag::mul(ag::concat_cols({rc, rp}), ag::constant(W)));
      };
      const Tensor C = normal_tensor({2, 6}, rng);
      const Tensor P = normal_tensor({4, 10}, rng);
      for (std::size_t which : {0u, 1u}) {
        const GradCheckResult r = gradcheck(fn, {C, P}, which, rng);
        CAPTURE(r.worst);
        CHECK(r.passed);
      }
    }
  }
}

TEST_CASE("transmit input validation") {
  Rng rng(2);
  const ChannelRealization ch = sample_channel(ChannelModel::AWGN, 3, 1.0, 10.0, rng);
  CHECK_THROWS_AS(ag::transmit_private(ag::constant(Tensor({3, 5}, 1.0)), ch, false, rng), InputError);
  CHECK_THROWS_AS(ag::transmit_private(ag::constant(Tensor({4, 4}, 1.0)), ch, false, rng), InputError);
  CHECK_THROWS_AS(ag::transmit_common(ag::constant(Tensor({3, 4}, 1.0)), two_groups_of(1), ch, false, rng), InputError);
}
