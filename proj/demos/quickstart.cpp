// SPDX-License-Identifier: Apache-2.0
// Generate a small chain dataset, train briefly, and print the evaluation.
//
//   quickstart [epochs]

#include <cstdlib>
#include <iostream>

#include "lanm/dataset.hpp"
#include "lanm/eval.hpp"
#include "lanm/train.hpp"

int main(int argc, char** argv) {
  using namespace lanm;
  const std::size_t epochs = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 40;

  data::GenConfig g;
  g.spec = scm::synthetic_chain(2);
  g.noise.segments = 19;
  g.noise.samples_per_segment = 500;
  g.noise.certification_segment = true;  // one segment with every edge switched off
  g.seed = 1;
  const auto d = data::gen_dataset(g);
  std::cout << "data: N=" << d.rows() << " D=" << d.dim() << " ell=" << d.ell << " M=" << d.segments << "\n";

  model::ModelConfig mc;
  mc.ell = d.ell;
  mc.u_dim = d.segments;
  mc.x_dim = d.dim();
  mc.hidden = 32;
  train::TrainState state{model::LanmModel(mc, 1), {}, 0, 1};
  train::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 128;
  tc.adam.lr = 3e-3;
  const auto log = train::train(state, d, tc);
  for (const auto& e : log.epochs) {
    if (e.epoch % 10 == 0 || e.epoch + 1 == log.epochs.size()) {
      std::cout << "epoch " << e.epoch << "  elbo " << e.mean.total << "  kl " << e.mean.kl << "\n";
    }
  }

  const auto rep = eval::evaluate_model(state.model, d, {});
  std::cout << "MPC " << rep.mpc.mpc;
  if (rep.shd) std::cout << "  SHD " << *rep.shd;
  std::cout << "\n" << rep.to_csv();
}
