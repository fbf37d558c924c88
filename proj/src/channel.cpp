// SPDX-License-Identifier: Apache-2.0
#include "semsplit/channel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

#include "semsplit/error.hpp"

namespace semsplit {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

double norm_sq(const double* x, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

}  // namespace

std::string to_string(ChannelModel m) {
  switch (m) {
    case ChannelModel::AWGN: return "awgn";
    case ChannelModel::Rician: return "rician";
    case ChannelModel::Rayleigh: return "rayleigh";
  }
  throw ConfigError("unknown channel model");
}

ChannelModel parse_channel_model(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "awgn") return ChannelModel::AWGN;
  if (s == "rician") return ChannelModel::Rician;
  if (s == "rayleigh") return ChannelModel::Rayleigh;
  throw ConfigError("unknown channel model '" + name + "' (expected awgn, rician or rayleigh)");
}

double snr_to_noise_var(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  if (!std::isfinite(snr_db)) throw InputError("SNR must be finite or +inf");
  return std::pow(10.0, -snr_db / 10.0);
}

Tensor power_normalize(const Tensor& x) {
  require(x.size() > 0, "power_normalize of empty vector");
  const double e = norm_sq(x.data(), static_cast<int>(x.size()));
  if (e == 0.0) throw InputError("power_normalize of zero vector");
  Tensor y = x;
  const double s = std::sqrt(static_cast<double>(x.size()) / e);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
  return y;
}

std::vector<Complex> real_to_complex(std::span<const double> x) {
  if (x.size() % 2 != 0) throw InputError("real_to_complex needs an even length, got " + std::to_string(x.size()));
  std::vector<Complex> z(x.size() / 2);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = Complex(x[2 * i], x[2 * i + 1]);
  return z;
}

std::vector<double> complex_to_real(std::span<const Complex> z) {
  std::vector<double> x(2 * z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    x[2 * i] = z[i].real();
    x[2 * i + 1] = z[i].imag();
  }
  return x;
}

ChannelRealization sample_channel(ChannelModel model, int users, double rician_r, double snr_db, Rng& rng) {
  require(users >= 1, "channel needs at least one user");
  ChannelRealization ch;
  ch.model = model;
  ch.noise_var.assign(static_cast<std::size_t>(users), snr_to_noise_var(snr_db));
  ch.h.resize(static_cast<std::size_t>(users));
  switch (model) {
    case ChannelModel::AWGN:
      std::fill(ch.h.begin(), ch.h.end(), Complex(1.0, 0.0));
      break;
    case ChannelModel::Rayleigh: {
      std::normal_distribution<double> n(0.0, std::sqrt(0.5));
      for (auto& h : ch.h) {
        const double re = n(rng);
        h = Complex(re, n(rng));
      }
      break;
    }
    case ChannelModel::Rician: {
      if (!(rician_r > 0.0) || !std::isfinite(rician_r)) throw ConfigError("Rician factor must be positive");
      const double mu = std::sqrt(rician_r / (rician_r + 1.0));
      const double sigma = std::sqrt(1.0 / (rician_r + 1.0));
      std::normal_distribution<double> n(0.0, sigma * std::sqrt(0.5));
      for (auto& h : ch.h) {
        const double re = n(rng);
        h = Complex(mu + re, n(rng));
      }
      break;
    }
    default:
      throw ConfigError("unknown channel model id");
  }
  return ch;
}

ChannelRealization sample_channel(const ChannelConfig& cfg, int users, double snr_db, Rng& rng) {
  return sample_channel(cfg.model, users, cfg.rician_r, snr_db, rng);
}

Tensor common_mixing(const GroupAssignment& a, bool interference) {
  Tensor mix({a.num_users, a.num_groups}, interference ? 1.0 : 0.0);
  for (int k = 0; k < a.num_users; ++k) mix.at(k, a.group_of[static_cast<std::size_t>(k)]) = 1.0;
  return mix;
}

Tensor private_mixing(int users, bool interference) {
  Tensor mix({users, users}, interference ? 1.0 : 0.0);
  for (int k = 0; k < users; ++k) mix.at(k, k) = 1.0;
  return mix;
}

namespace ag {

Var power_normalize_rows(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) == 0) throw InputError("power_normalize_rows expects [N, L], got " + shape_str(xv.shape()));
  const int N = xv.dim(0), L = xv.dim(1);
  Tensor y = xv;
  std::vector<double> energy(static_cast<std::size_t>(N));
  for (int r = 0; r < N; ++r) {
    const double e = norm_sq(xv.data() + static_cast<std::size_t>(r) * L, L);
    if (e == 0.0) throw InputError("power_normalize of zero vector (row " + std::to_string(r) + ")");
    energy[static_cast<std::size_t>(r)] = e;
    const double s = std::sqrt(L / e);
    for (int i = 0; i < L; ++i) y.at(r, i) *= s;
  }
  return make_result(std::move(y), {x}, [energy](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor& g = self.parents[0]->grad_buffer();
    const int N = xv.dim(0), L = xv.dim(1);
    for (int r = 0; r < N; ++r) {
      const double e = energy[static_cast<std::size_t>(r)];
      const double s = std::sqrt(L / e);
      double dot = 0.0;
      for (int i = 0; i < L; ++i) dot += xv.at(r, i) * self.grad.at(r, i);
      for (int i = 0; i < L; ++i) g.at(r, i) += s * (self.grad.at(r, i) - xv.at(r, i) * dot / e);
    }
  });
}

Var transmit(const Var& sources, const Tensor& mix, const ChannelRealization& ch, Rng& rng) {
  const Tensor& sv = sources.value();
  if (sv.rank() != 2) throw InputError("transmit expects [S, L] sources, got " + shape_str(sv.shape()));
  const int S = sv.dim(0), L = sv.dim(1);
  if (L % 2 != 0) throw InputError("feature length must be even to form complex symbols, got " + std::to_string(L));
  if (mix.rank() != 2 || mix.dim(1) != S) throw InputError("mixing matrix does not match the number of sources");
  const int K = mix.dim(0);
  if (ch.users() != K) {
    throw InputError("channel realization has " + std::to_string(ch.users()) + " users, expected " + std::to_string(K));
  }

  const Var xn = power_normalize_rows(sources);
  const Tensor& x = xn.value();
  std::vector<std::vector<Complex>> sym(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    sym[static_cast<std::size_t>(s)] = real_to_complex(std::span<const double>(x.data() + static_cast<std::size_t>(s) * L, L));
    for (auto& z : sym[static_cast<std::size_t>(s)]) z /= kSqrt2;
  }

  const int M = L / 2;
  Tensor out({K, L});
  std::vector<Complex> y(static_cast<std::size_t>(M));
  for (int k = 0; k < K; ++k) {
    const Complex h = ch.h[static_cast<std::size_t>(k)];
    if (std::abs(h) == 0.0) throw InputError("zero channel coefficient cannot be equalized");
    std::fill(y.begin(), y.end(), Complex(0.0, 0.0));
    for (int s = 0; s < S; ++s) {
      const double a = mix.at(k, s);
      if (a == 0.0) continue;
      const auto& z = sym[static_cast<std::size_t>(s)];
      for (int i = 0; i < M; ++i) y[static_cast<std::size_t>(i)] += a * h * z[static_cast<std::size_t>(i)];
    }
    const double var = ch.noise_var[static_cast<std::size_t>(k)];
    if (var > 0.0) {
      std::normal_distribution<double> n(0.0, std::sqrt(var / 2.0));
      for (auto& v : y) {
        const double re = n(rng);
        v += Complex(re, n(rng));
      }
    }
    for (int i = 0; i < M; ++i) {
      const Complex r = y[static_cast<std::size_t>(i)] / h * kSqrt2;
      out.at(k, 2 * i) = r.real();
      out.at(k, 2 * i + 1) = r.imag();
    }
  }

  // The equalized output is mix * xn plus a constant, so the backward pass is mix^T.
  return make_result(std::move(out), {xn}, [mix](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const int K = mix.dim(0), S = mix.dim(1), L = g.dim(1);
    for (int k = 0; k < K; ++k) {
      for (int s = 0; s < S; ++s) {
        const double a = mix.at(k, s);
        if (a == 0.0) continue;
        for (int i = 0; i < L; ++i) g.at(s, i) += a * self.grad.at(k, i);
      }
    }
  });
}

Var transmit_common(const Var& C, const GroupAssignment& assignment, const ChannelRealization& ch, bool interference,
                    Rng& rng) {
  if (C.value().rank() != 2 || C.value().dim(0) != assignment.num_groups) {
    throw InputError("common features " + shape_str(C.shape()) + " do not match " + std::to_string(assignment.num_groups) +
                     " groups");
  }
  return transmit(C, common_mixing(assignment, interference), ch, rng);
}

Var transmit_private(const Var& P, const ChannelRealization& ch, bool interference, Rng& rng) {
  if (P.value().rank() != 2) throw InputError("private features must be [K, L], got " + shape_str(P.shape()));
  return transmit(P, private_mixing(P.value().dim(0), interference), ch, rng);
}

}  // namespace ag

}  // namespace semsplit
