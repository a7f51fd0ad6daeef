// SPDX-License-Identifier: Apache-2.0
// Two generators with different z2 that produce the same observations.

#include <cmath>
#include <iostream>

#include "lanm/oracles.hpp"

int main() {
  using namespace lanm;
  for (const bool flat : {false, true}) {
    const auto p = oracles::build_counterexample(1, flat);
    std::cout << (flat ? "constant MLP2:  " : "random MLP2:    ") << "probes " << p.x.rows()
              << "  max |x - x'| " << p.max_abs_diff << "  corr(z2, z2') " << p.corr_z2 << "\n";
  }
  // With a u-invariant parent term the observations cannot tell z2 from z2'.
}
