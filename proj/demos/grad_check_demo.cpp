// SPDX-License-Identifier: Apache-2.0
// Checks tape gradients of a tiny MLP loss against central differences.

#include <iostream>

#include "lanm/grad_check.hpp"
#include "lanm/rng.hpp"

int main() {
  using namespace lanm;
  using ad::NodeId;
  using ad::Tape;

  Rng rng(3);
  auto random = [&](std::size_t r, std::size_t c) {
    Tensor t(r, c);
    for (auto& v : t.values()) v = rng.normal(0.0, 0.7);
    return t;
  };
  const Tensor x = random(5, 3);
  const Tensor y = random(5, 1);

  // 3 -> 4 -> 1 with a leaky ReLU, squared error.
  ad::LossBuilder loss = [&](Tape& t, std::span<const NodeId> p) {
    const NodeId in = t.constant(x);
    const NodeId h = t.leaky_relu(t.add(t.matmul(in, p[0]), t.broadcast_row(p[1], 5)), 0.2);
    const NodeId out = t.add(t.matmul(h, p[2]), t.broadcast_row(p[3], 5));
    return t.mean(t.square(t.sub(out, t.constant(y))));
  };
  const std::vector<Tensor> params{random(3, 4), random(1, 4), random(4, 1), random(1, 1)};

  const auto rep = ad::grad_check(loss, params, 1e-4);
  std::cout << "entries " << rep.entries_checked << ", max relative error " << rep.max_rel_error << " -> "
            << (rep.pass ? "PASS" : "FAIL") << "\n";
  return rep.pass ? 0 : 1;
}
