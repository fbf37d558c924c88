// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace semsplit {

/// All randomness flows through explicit engines owned by the caller.
using Rng = std::mt19937_64;

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

/// Independent stream for worker `index` derived from `base`.
inline std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) { return base ^ index; }

/// Fresh seed drawn from a parent engine.
inline std::uint64_t derive_seed(Rng& rng) { return rng(); }

}  // namespace semsplit
