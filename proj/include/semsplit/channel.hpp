// SPDX-License-Identifier: Apache-2.0
#pragma once

// Downlink channel simulation.
//
// A real feature row x of length L is power-normalized to mean square 1 and
// paired into L/2 complex symbols z_i = (x_{2i} + j x_{2i+1}) / sqrt(2), so each
// symbol has unit average power. User k receives y = h_k * s + n_k with
// n_k ~ CN(0, sigma_k^2), equalizes with perfect CSI (y / h_k) and unpairs back
// to reals with the inverse scaling. In the real domain the per-element
// signal-to-noise ratio therefore equals 1 / sigma_k^2.

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "semsplit/autograd.hpp"
#include "semsplit/clustering.hpp"
#include "semsplit/rng.hpp"
#include "semsplit/tensor.hpp"

namespace semsplit {

using Complex = std::complex<double>;

enum class ChannelModel { AWGN, Rician, Rayleigh };

std::string to_string(ChannelModel m);
/// Accepts "awgn", "rician", "rayleigh" in any case; throws ConfigError otherwise.
ChannelModel parse_channel_model(const std::string& name);

struct ChannelConfig {
  ChannelModel model = ChannelModel::AWGN;
  double rician_r = 1.0;
  /// Superimpose every other transmitted block on each user's signal.
  bool interference = false;
  bool operator==(const ChannelConfig&) const = default;
};

struct ChannelRealization {
  ChannelModel model = ChannelModel::AWGN;
  std::vector<Complex> h;         // per user
  std::vector<double> noise_var;  // per user; 0 means noiseless
  int users() const { return static_cast<int>(h.size()); }
};

/// sigma^2 = 10^(-snr_db / 10). +inf maps to 0.
double snr_to_noise_var(double snr_db);

/// x * sqrt(L / |x|^2).
Tensor power_normalize(const Tensor& x);

std::vector<Complex> real_to_complex(std::span<const double> x);
std::vector<double> complex_to_real(std::span<const Complex> z);

/// Per-user fading draws (h = 1 for AWGN) with a common noise variance.
ChannelRealization sample_channel(ChannelModel model, int users, double rician_r, double snr_db, Rng& rng);
ChannelRealization sample_channel(const ChannelConfig& cfg, int users, double snr_db, Rng& rng);

namespace ag {

/// Row-wise power normalization of a [N, L] matrix.
Var power_normalize_rows(const Var& x);

/// Sends the rows of `sources` ([S, L], L even) through the channel. User k's
/// clean signal is sum_s mix[k][s] * normalized source s; `mix` is [K, S].
/// Noise is drawn from `rng` and is a constant of the returned graph.
Var transmit(const Var& sources, const Tensor& mix, const ChannelRealization& ch, Rng& rng);

/// Group common features C [G, L_c] to every user: [K, L_c].
Var transmit_common(const Var& C, const GroupAssignment& assignment, const ChannelRealization& ch, bool interference,
                    Rng& rng);
/// Private features P [K, L_p] to their own users: [K, L_p].
Var transmit_private(const Var& P, const ChannelRealization& ch, bool interference, Rng& rng);

}  // namespace ag

/// Mixing matrices used by the transmit functions.
Tensor common_mixing(const GroupAssignment& assignment, bool interference);
Tensor private_mixing(int users, bool interference);

}  // namespace semsplit
