// SPDX-License-Identifier: Apache-2.0
#include "semsplit/rng.hpp"

#include <sstream>

#include "semsplit/error.hpp"

namespace semsplit {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw IoError("malformed rng state");
}

}  // namespace semsplit
