// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "lanm/dataset.hpp"
#include "lanm/train.hpp"
#include "test_util.hpp"

using namespace lanm;
using lanm::testing::TempDir;

namespace {

data::Dataset toy_dataset(std::size_t ell = 1, std::size_t segments = 5, std::size_t per = 200,
                          std::uint64_t seed = 1) {
  data::GenConfig g;
  g.spec = scm::synthetic_chain(ell);
  g.noise.segments = segments;
  g.noise.samples_per_segment = per;
  g.mixing.identity = ell == 1;
  g.seed = seed;
  return data::gen_dataset(g);
}

train::TrainState fresh_state(const data::Dataset& d, std::uint64_t seed = 1, std::size_t hidden = 8) {
  model::ModelConfig c;
  c.ell = d.ell;
  c.u_dim = d.segments;
  c.x_dim = d.dim();
  c.hidden = hidden;
  return {model::LanmModel(c, seed), {}, 0, seed};
}

train::TrainConfig quick_config(std::size_t epochs, std::size_t batch = 64) {
  train::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch;
  t.adam.lr = 3e-3;
  return t;
}

}  // namespace

TEST(Adam, FirstStepMagnitude) {
  std::vector<Tensor> p{Tensor::from_rows({{0.0, 5.0}})};
  const std::vector<Tensor> g{Tensor::from_rows({{1.0, -3.0}})};
  auto s = train::AdamState::zeros_like(p);
  train::AdamConfig c;
  c.lr = 0.1;
  train::adam_step(p, g, s, c);
  // m_hat = g and v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0][0], -0.1 * 1.0 / (1.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p[0][1], 5.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-12);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Tensor> p{Tensor::from_rows({{1.0, -2.0}})};
  auto s = train::AdamState::zeros_like(p);
  train::AdamConfig c;
  train::adam_step(p, {Tensor::from_rows({{4.0, 4.0}})}, s, c);
  const Tensor after_first = p[0];
  const double m0 = s.m[0][0];
  const double v0 = s.v[0][0];
  // With nonzero moments a zero gradient still moves the parameters; from a
  // fresh state it must not.
  std::vector<Tensor> q{Tensor::from_rows({{1.0, -2.0}})};
  auto fresh = train::AdamState::zeros_like(q);
  train::adam_step(q, {Tensor(1, 2)}, fresh, c);
  EXPECT_EQ(q[0][0], 1.0);
  EXPECT_EQ(q[0][1], -2.0);
  train::adam_step(p, {Tensor(1, 2)}, s, c);
  EXPECT_DOUBLE_EQ(s.m[0][0], c.beta1 * m0);
  EXPECT_DOUBLE_EQ(s.v[0][0], c.beta2 * v0);
  EXPECT_NE(p[0][0], after_first[0]);
}

TEST(Adam, MatchesHandIteration) {
  // Three steps on one scalar against an independent transcription of the update rule.
  std::vector<Tensor> p{Tensor::scalar(0.5)};
  auto s = train::AdamState::zeros_like(p);
  train::AdamConfig c;
  c.lr = 0.01;
  double x = 0.5, m = 0.0, v = 0.0;
  const double gs[] = {0.3, -1.2, 2.5};
  for (int t = 1; t <= 3; ++t) {
    const double g = gs[t - 1];
    train::adam_step(p, {Tensor::scalar(g)}, s, c);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p[0][0], x, 1e-15);
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  std::vector<Tensor> p{Tensor::scalar(1.0), Tensor::scalar(2.0)};
  auto s = train::AdamState::zeros_like(p);
  const std::vector<std::string> names{"encoder.0.w", "decoder.2.b"};
  try {
    train::adam_step(p, {Tensor::scalar(0.0), Tensor::scalar(std::numeric_limits<double>::infinity())}, s, {},
                     &names);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.2.b"), std::string::npos);
  }
  EXPECT_EQ(p[0][0], 1.0);
  EXPECT_EQ(s.step, 0u);
}

TEST(Train, ZeroEpochsLeavesModel) {
  const auto d = toy_dataset();
  auto s = fresh_state(d);
  const auto before = s.model.params().values;
  const auto log = train::train(s, d, quick_config(0));
  EXPECT_TRUE(log.epochs.empty());
  EXPECT_TRUE(s.model.params().values == before);
  EXPECT_EQ(s.epoch, 0u);
}

TEST(Train, ToyElboImproves) {
  const auto d = toy_dataset();
  auto s = fresh_state(d);
  const auto log = train::train(s, d, quick_config(50));
  ASSERT_EQ(log.epochs.size(), 50u);
  EXPECT_GT(log.epochs.back().mean.total, log.epochs.front().mean.total);
  std::vector<double> first, last;
  for (std::size_t e = 0; e < 5; ++e) first.push_back(log.epochs[e].mean.total);
  for (std::size_t e = 45; e < 50; ++e) last.push_back(log.epochs[e].mean.total);
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  EXPECT_GT(last[2], first[2]);
}

TEST(Train, BitIdenticalRuns) {
  const auto d = toy_dataset(2, 4, 50, 3);
  auto a = fresh_state(d, 5);
  auto b = fresh_state(d, 5);
  const auto la = train::train(a, d, quick_config(3, 32));
  const auto lb = train::train(b, d, quick_config(3, 32));
  EXPECT_TRUE(a.model.params().values == b.model.params().values);
  EXPECT_EQ(la.to_csv(), lb.to_csv());
}

TEST(Train, ShuffleIsPermutation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(derive_seed(seed, "epoch", 3));
    auto perm = rng.permutation(1000);
    std::sort(perm.begin(), perm.end());
    std::vector<std::size_t> want(1000);
    std::iota(want.begin(), want.end(), std::size_t{0});
    EXPECT_EQ(perm, want);
  }
}

TEST(Train, ShapeMismatchRejected) {
  const auto d = toy_dataset(2, 4, 20);
  model::ModelConfig c;
  c.ell = 2;
  c.u_dim = 4;
  c.x_dim = 3;
  c.hidden = 4;
  train::TrainState s{model::LanmModel(c, 1), {}, 0, 1};
  EXPECT_THROW(train::train(s, d, quick_config(1)), ConfigError);
  auto bad = quick_config(1);
  bad.batch_size = 0;
  auto ok = fresh_state(d);
  EXPECT_THROW(train::train(ok, d, bad), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir("ckpt");
  const auto d = toy_dataset(2, 4, 30);
  auto s = fresh_state(d, 9);
  train::train(s, d, quick_config(2, 16));
  train::save_checkpoint(s, dir.path());
  const auto r = train::load_checkpoint(dir.path());
  EXPECT_TRUE(r.model.params().values == s.model.params().values);
  EXPECT_EQ(r.model.params().names, s.model.params().names);
  EXPECT_EQ(r.epoch, 2u);
  EXPECT_EQ(r.seed, 9u);
  EXPECT_EQ(r.adam.step, s.adam.step);
  EXPECT_TRUE(r.adam.m == s.adam.m);
  EXPECT_TRUE(r.adam.v == s.adam.v);
  const auto a = train::model_config_to_json(r.model.config());
  EXPECT_EQ(a, train::model_config_to_json(s.model.config()));
}

TEST(Checkpoint, ResumeMatchesStraightRun) {
  TempDir dir("resume");
  const auto d = toy_dataset(2, 4, 40, 2);
  auto straight = fresh_state(d, 4);
  train::train(straight, d, quick_config(4, 32));

  auto first = fresh_state(d, 4);
  train::train(first, d, quick_config(2, 32));
  train::save_checkpoint(first, dir.path());
  auto resumed = train::load_checkpoint(dir.path());
  const auto log = train::train(resumed, d, quick_config(2, 32));
  EXPECT_EQ(log.epochs.front().epoch, 2u);
  EXPECT_EQ(resumed.epoch, 4u);
  EXPECT_TRUE(resumed.model.params().values == straight.model.params().values);
}

TEST(Checkpoint, NotADirectoryOfWeights) {
  TempDir dir("empty");
  EXPECT_THROW(train::load_checkpoint(dir.path()), IoError);
}

TEST(Checkpoint, NonFiniteLossKeepsLastGood) {
  TempDir dir("poison");
  auto d = toy_dataset(1, 2, 20);
  auto s = fresh_state(d);
  auto cfg = quick_config(1, 8);
  cfg.checkpoint_interval = 1;
  train::train(s, d, cfg, [&](const train::TrainState& st) { train::save_checkpoint(st, dir.path()); });
  ASSERT_EQ(train::load_checkpoint(dir.path()).epoch, 1u);
  for (auto& v : d.x.values()) v = 1e300;
  EXPECT_THROW(
      train::train(s, d, cfg, [&](const train::TrainState& st) { train::save_checkpoint(st, dir.path()); }),
      NumericError);
  EXPECT_EQ(train::load_checkpoint(dir.path()).epoch, 1u);
}

TEST(Log, CsvLayout) {
  const auto d = toy_dataset(1, 2, 20);
  auto s = fresh_state(d);
  const auto log = train::train(s, d, quick_config(3, 8));
  const std::string csv = log.to_csv();
  EXPECT_EQ(csv.rfind("epoch,recon,kl,l1,total\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  for (const auto& e : log.epochs) {
    EXPECT_NEAR(e.mean.total, e.mean.reconstruction - e.mean.kl - s.model.config().gamma * e.mean.l1, 1e-9);
  }
}
