// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "lanm/grad_check.hpp"
#include "lanm/model.hpp"

using namespace lanm;
using ad::NodeId;
using ad::Tape;

namespace {

model::ModelConfig small_config(std::size_t ell = 3, std::size_t segments = 4, std::size_t dim = 3) {
  model::ModelConfig c;
  c.ell = ell;
  c.u_dim = segments;
  c.x_dim = dim;
  c.hidden = 6;
  return c;
}

struct Batch {
  Tensor x, u, noise;
};

Batch random_batch(const model::ModelConfig& c, std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  Batch b{Tensor(rows, c.x_dim), Tensor(rows, c.u_dim), Tensor(rows, c.ell)};
  for (auto& v : b.x.values()) v = rng.normal();
  for (auto& v : b.noise.values()) v = rng.normal();
  for (std::size_t r = 0; r < rows; ++r) b.u(r, rng.index(c.u_dim)) = 1.0;
  return b;
}

std::size_t param_index(const model::LanmModel& m, const std::string& name) {
  const auto& names = m.params().names;
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return k;
  ADD_FAILURE() << "no parameter " << name;
  return 0;
}

// Plain Eigen re-implementation of the conditional VAE for the masks-zero mode.
using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
  Mat m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t(r, c);
  return m;
}

Mat ref_mlp(const model::LanmModel& m, const std::string& name, const Mat& in) {
  const double slope = m.config().slope;
  Mat h = in;
  for (int layer = 0; layer < 3; ++layer) {
    const std::string p = name + "." + std::to_string(layer);
    const Mat w = to_eigen(m.params().values[param_index(m, p + ".w")]);
    const Mat b = to_eigen(m.params().values[param_index(m, p + ".b")]);
    h = (h * w).rowwise() + b.row(0);
    if (layer < 2) h = h.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  }
  return h;
}

Mat hcat(std::initializer_list<Mat> parts) {
  Eigen::Index cols = 0, rows = parts.begin()->rows();
  for (const auto& p : parts) cols += p.cols();
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}

double reference_elbo(const model::LanmModel& m, const Batch& b) {
  const auto& c = m.config();
  const Mat x = to_eigen(b.x), u = to_eigen(b.u), eps = to_eigen(b.noise);
  const Eigen::Index n = x.rows();
  const double clamp = c.logvar_clamp;
  const Mat feat = ref_mlp(m, "encoder", hcat({x, u}));
  Mat z(n, static_cast<Eigen::Index>(c.ell));
  double kl = 0.0;
  for (std::size_t i = 0; i < c.ell; ++i) {
    const Mat zeros = Mat::Zero(n, static_cast<Eigen::Index>(i));
    const Mat q = ref_mlp(m, "posterior." + std::to_string(i), i == 0 ? hcat({feat, u}) : hcat({feat, zeros, u}));
    const Mat p = ref_mlp(m, "prior." + std::to_string(i), i == 0 ? u : hcat({zeros, u}));
    for (Eigen::Index r = 0; r < n; ++r) {
      const double lq = std::clamp(q(r, 1), -clamp, clamp);
      const double lp = std::clamp(p(r, 1), -clamp, clamp);
      z(r, static_cast<Eigen::Index>(i)) = q(r, 0) + std::exp(0.5 * lq) * eps(r, static_cast<Eigen::Index>(i));
      kl += model::kl_gaussian(q(r, 0), std::exp(lq), p(r, 0), std::exp(lp));
    }
  }
  const Mat xhat = ref_mlp(m, "decoder", z);
  const double sq = (x - xhat).squaredNorm();
  const double rec = -0.5 * sq / (c.obs_var * static_cast<double>(n)) -
                     0.5 * static_cast<double>(c.x_dim) * std::log(2.0 * std::numbers::pi * c.obs_var);
  return rec - kl / static_cast<double>(n);
}

}  // namespace

TEST(Kl, ClosedFormValues) {
  EXPECT_NEAR(model::kl_gaussian(0, 1, 0, 1), 0.0, 1e-15);
  EXPECT_NEAR(model::kl_gaussian(1, 1, 0, 1), 0.5, 1e-15);
  EXPECT_NEAR(model::kl_gaussian(0, 4, 0, 1), 2.0 - 0.5 - std::log(2.0), 1e-15);
  EXPECT_NEAR(model::kl_gaussian(0, 4, 0, 1), 0.8069, 1e-4);
}

TEST(Kl, GraphMatchesClosedForm) {
  Tape t;
  std::vector<model::NodeOutputs> q{{t.constant(Tensor::from_rows({{0}, {1}})), t.constant(Tensor::from_rows({{std::log(4.0)}, {0}}))}};
  std::vector<model::NodeOutputs> p{{t.constant(Tensor::from_rows({{0}, {0}})), t.constant(Tensor::from_rows({{0}, {0}}))}};
  const NodeId kl = model::kl_conditional_gaussian(t, q, p);
  EXPECT_NEAR(t.value(kl)[0], (model::kl_gaussian(0, 4, 0, 1) + 0.5) / 2.0, 1e-14);
}

TEST(Masks, Shapes) {
  const model::LanmModel m3(small_config(3), 1);
  const auto table = m3.mask_table();
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0].cols(), 0u);
  EXPECT_EQ(table[1].cols(), 1u);
  EXPECT_EQ(table[2].cols(), 2u);
  EXPECT_EQ(table[2].rows(), 4u);
  EXPECT_FALSE(m3.mask_net(0).has_value());
  EXPECT_TRUE(m3.mask_net(2).has_value());

  const model::LanmModel m1(small_config(1), 1);
  ASSERT_EQ(m1.mask_table().size(), 1u);
  EXPECT_EQ(m1.mask_table()[0].size(), 0u);
}

TEST(Masks, IndependentPriorForcesZero) {
  auto c = small_config(3);
  c.independent_prior = true;
  const model::LanmModel m(c, 1);
  for (const auto& t : m.mask_table())
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FALSE(m.mask_net(i).has_value());
  const auto b = random_batch(c, 3, 2);
  Tape tape;
  model::BoundModel bm(m, tape);
  const auto masks = model::mask_values(bm, tape.constant(b.u));
  for (std::size_t i = 1; i < 3; ++i)
    for (double v : tape.value(*masks[i]).values()) EXPECT_EQ(v, 0.0);
}

TEST(Masks, TableMatchesMaskNet) {
  const model::LanmModel m(small_config(3), 4);
  const auto b = random_batch(m.config(), 5, 3);
  Tape tape;
  model::BoundModel bm(m, tape);
  const auto masks = model::mask_values(bm, tape.constant(b.u));
  const auto table = m.mask_table();
  for (std::size_t r = 0; r < 5; ++r) {
    std::size_t seg = 0;
    while (b.u(r, seg) == 0.0) ++seg;
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(tape.value(*masks[2])(r, c), table[2](seg, c), 1e-14);
  }
}

TEST(Init, GlorotBounds) {
  const model::LanmModel m(small_config(), 1);
  const auto& ps = m.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto& t = ps.values[k];
    if (ps.names[k].ends_with(".b")) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0);
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
      for (double v : t.values()) EXPECT_LE(std::fabs(v), limit);
    }
  }
  EXPECT_TRUE(model::LanmModel(small_config(), 1).params().values == ps.values);
  EXPECT_FALSE(model::LanmModel(small_config(), 2).params().values == ps.values);
}

TEST(Posterior, ZeroNoiseGivesMean) {
  const model::LanmModel m(small_config(), 3);
  auto b = random_batch(m.config(), 4, 1);
  b.noise = Tensor(4, 3);
  Tape tape;
  model::BoundModel bm(m, tape);
  const auto g = model::posterior_sample(bm, tape.constant(b.x), tape.constant(b.u), tape.constant(b.noise));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& mu = tape.value(g.heads[i].mean);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(tape.value(g.z)(r, i), mu[r]);
  }
}

TEST(Posterior, LogVarianceClamped) {
  model::LanmModel m(small_config(2), 3);
  const std::size_t w = param_index(m, "posterior.0.2.w");
  const std::size_t bias = param_index(m, "posterior.0.2.b");
  for (std::size_t r = 0; r < m.params().values[w].rows(); ++r) m.params().values[w](r, 1) = 0.0;
  m.params().values[bias](0, 1) = 50.0;
  const std::size_t bias1 = param_index(m, "posterior.1.2.b");
  const std::size_t w1 = param_index(m, "posterior.1.2.w");
  for (std::size_t r = 0; r < m.params().values[w1].rows(); ++r) m.params().values[w1](r, 1) = 0.0;
  m.params().values[bias1](0, 1) = -50.0;
  const auto b = random_batch(m.config(), 3, 1);
  Tape tape;
  model::BoundModel bm(m, tape);
  const auto g = model::posterior_sample(bm, tape.constant(b.x), tape.constant(b.u), tape.constant(b.noise));
  for (double v : tape.value(g.heads[0].logvar).values()) EXPECT_EQ(v, 10.0);
  for (double v : tape.value(g.heads[1].logvar).values()) EXPECT_EQ(v, -10.0);
}

TEST(Posterior, IdenticalRowsGiveIdenticalDraws) {
  const model::LanmModel m(small_config(), 5);
  auto b = random_batch(m.config(), 2, 4);
  for (std::size_t c = 0; c < b.x.cols(); ++c) b.x(1, c) = b.x(0, c);
  for (std::size_t c = 0; c < b.u.cols(); ++c) b.u(1, c) = b.u(0, c);
  for (std::size_t c = 0; c < b.noise.cols(); ++c) b.noise(1, c) = b.noise(0, c);
  Tape tape;
  model::BoundModel bm(m, tape);
  const auto g = model::posterior_sample(bm, tape.constant(b.x), tape.constant(b.u), tape.constant(b.noise));
  const auto& z = tape.value(g.z);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(z(0, c), z(1, c));
}

TEST(Posterior, AutoregressiveCausality) {
  const model::LanmModel m(small_config(4, 3, 4), 6);
  const auto b = random_batch(m.config(), 5, 9);
  auto draw = [&](const Tensor& noise) {
    Tape tape;
    model::BoundModel bm(m, tape, false);
    const auto g = model::posterior_sample(bm, tape.constant(b.x), tape.constant(b.u), tape.constant(noise));
    return tape.value(g.z);
  };
  const Tensor base = draw(b.noise);
  for (std::size_t j = 0; j < 4; ++j) {
    Tensor noise = b.noise;
    for (std::size_t r = 0; r < 5; ++r) noise(r, j) += 0.75;
    const Tensor z = draw(noise);
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t i = 0; i < j; ++i) EXPECT_EQ(z(r, i), base(r, i)) << "i=" << i << " j=" << j;
      EXPECT_NE(z(r, j), base(r, j));
    }
  }
}

TEST(Posterior, ReparameterizationMean) {
  const model::LanmModel m(small_config(2, 3, 2), 8);
  const std::size_t n = 10000;
  Rng rng(4);
  Tensor x(n, 2), u(n, 3), noise(n, 2);
  const double x0 = rng.normal(), x1 = rng.normal();
  for (std::size_t r = 0; r < n; ++r) {
    x(r, 0) = x0;
    x(r, 1) = x1;
    u(r, 1) = 1.0;
    noise(r, 0) = rng.normal();
    noise(r, 1) = rng.normal();
  }
  Tape tape;
  model::BoundModel bm(m, tape, false);
  const auto g = model::posterior_sample(bm, tape.constant(x), tape.constant(u), tape.constant(noise));
  const double mu = tape.value(g.heads[0].mean)[0];
  const double sigma = std::exp(0.5 * tape.value(g.heads[0].logvar)[0]);
  double mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) mean += tape.value(g.z)(r, 0);
  mean /= static_cast<double>(n);
  EXPECT_LT(std::fabs(mean - mu), 3.0 * sigma / 100.0);
}

TEST(Posterior, NonFiniteHeadNamesBatch) {
  model::LanmModel m(small_config(2), 1);
  m.params().values[param_index(m, "posterior.1.2.b")][0] = std::numeric_limits<double>::quiet_NaN();
  const auto b = random_batch(m.config(), 2, 1);
  Tape tape;
  model::BoundModel bm(m, tape);
  try {
    model::elbo(bm, b.x, b.u, b.noise, 7);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 7"), std::string::npos) << e.what();
  }
}

TEST(Elbo, PartsComposeTotal) {
  auto c = small_config();
  c.gamma = 0.3;
  const model::LanmModel m(c, 2);
  const auto b = random_batch(c, 6, 5);
  const auto e = model::evaluate_elbo(m, b.x, b.u, b.noise);
  EXPECT_NEAR(e.total, e.reconstruction - e.kl - c.gamma * e.l1, 1e-12);
  EXPECT_GE(e.kl, 0.0);
  EXPECT_GT(e.l1, 0.0);
}

TEST(Elbo, KlNonNegativeAcrossBatches) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const model::LanmModel m(small_config(3, 5, 4), seed);
    const auto b = random_batch(m.config(), 8, seed + 50);
    EXPECT_GE(model::evaluate_elbo(m, b.x, b.u, b.noise).kl, 0.0);
  }
}

TEST(Elbo, MatchesReferenceImplementation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = small_config(3, 4, 5);
    c.gamma = 0.0;
    c.independent_prior = true;
    const model::LanmModel m(c, seed);
    const auto b = random_batch(c, 7, seed);
    const double got = model::evaluate_elbo(m, b.x, b.u, b.noise).total;
    EXPECT_NEAR(got, reference_elbo(m, b), 1e-10 * std::max(1.0, std::fabs(got)));
  }
}

TEST(Elbo, GammaZeroIgnoresMaskPenalty) {
  auto c = small_config();
  c.gamma = 0.0;
  const model::LanmModel m(c, 3);
  const auto b = random_batch(c, 4, 1);
  const auto e = model::evaluate_elbo(m, b.x, b.u, b.noise);
  EXPECT_GT(e.l1, 0.0);
  EXPECT_EQ(e.total, e.reconstruction - e.kl);
  model::LanmModel penalized = m;
  penalized.mutable_config().gamma = 1.0;
  const auto f = model::evaluate_elbo(penalized, b.x, b.u, b.noise);
  EXPECT_NEAR(e.total - f.total, e.l1, 1e-12);
}

TEST(Elbo, GradientMatchesFiniteDifferences) {
  for (std::uint64_t trial = 1; trial <= 3; ++trial) {
    auto c = small_config(3, 4, 3);
    c.hidden = 5;
    c.gamma = 0.3;
    c.obs_var = 0.5;
    const model::LanmModel m(c, trial);
    const auto b = random_batch(c, 4, trial + 100);
    Tape tape;
    model::BoundModel bm(m, tape);
    const auto g = model::elbo(bm, b.x, b.u, b.noise);
    const auto grads = tape.backward(g.total);
    double worst = 0.0;
    for (std::size_t k = 0; k < m.params().size(); ++k) {
      for (std::size_t e = 0; e < m.params().values[k].size(); ++e) {
        model::LanmModel mm = m;
        const double h = 1e-6;
        mm.params().values[k][e] += h;
        const double up = model::evaluate_elbo(mm, b.x, b.u, b.noise).total;
        mm.params().values[k][e] -= 2 * h;
        const double down = model::evaluate_elbo(mm, b.x, b.u, b.noise).total;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, ad::relative_error(grads.of(bm.param(k))[e], fd, 1e-6));
      }
    }
    EXPECT_LT(worst, 1e-3) << "trial " << trial;
  }
}

TEST(Elbo, ShapeMismatchThrows) {
  const model::LanmModel m(small_config(), 1);
  EXPECT_THROW(model::evaluate_elbo(m, Tensor(2, 4), Tensor(2, 4), Tensor(2, 3)), ShapeError);
  EXPECT_THROW(model::evaluate_elbo(m, Tensor(2, 3), Tensor(2, 5), Tensor(2, 3)), ShapeError);
  EXPECT_THROW(model::evaluate_elbo(m, Tensor(2, 3), Tensor(2, 4), Tensor(2, 2)), ShapeError);
}

TEST(Elbo, ZeroResidualReconstruction) {
  auto c = small_config(2, 2, 3);
  c.obs_var = 1.0;
  model::LanmModel m(c, 4);
  const Tensor xrow = Tensor::from_rows({{0.3, -1.1, 2.0}});
  for (auto& v : m.params().values[param_index(m, "decoder.2.w")].values()) v = 0.0;
  auto& bias = m.params().values[param_index(m, "decoder.2.b")];
  for (std::size_t k = 0; k < 3; ++k) bias[k] = xrow[k];
  auto b = random_batch(c, 5, 2);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t k = 0; k < 3; ++k) b.x(r, k) = xrow[k];
  const auto e = model::evaluate_elbo(m, b.x, b.u, b.noise);
  EXPECT_NEAR(e.reconstruction, -0.5 * 3.0 * std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(Decode, ZeroWeightsGiveBias) {
  model::LanmModel m(small_config(2, 2, 3), 4);
  for (auto& v : m.params().values[param_index(m, "decoder.2.w")].values()) v = 0.0;
  auto& bias = m.params().values[param_index(m, "decoder.2.b")];
  bias[0] = 1.0;
  bias[1] = -2.0;
  bias[2] = 0.5;
  const Tensor xhat = model::decode(m, Tensor::from_rows({{1, 2}, {-3, 4}, {0, 0}}));
  ASSERT_EQ(xhat.rows(), 3u);
  ASSERT_EQ(xhat.cols(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(xhat(r, 0), 1.0);
    EXPECT_EQ(xhat(r, 1), -2.0);
    EXPECT_EQ(xhat(r, 2), 0.5);
  }
}

TEST(Decode, IdentityNetworkAndPurity) {
  auto c = small_config(2, 2, 2);
  c.slope = 1.0;  // LeakyReLU with unit slope is the identity
  model::LanmModel m(c, 5);
  for (int layer = 0; layer < 3; ++layer) {
    auto& w = m.params().values[param_index(m, "decoder." + std::to_string(layer) + ".w")];
    for (std::size_t r = 0; r < w.rows(); ++r)
      for (std::size_t k = 0; k < w.cols(); ++k) w(r, k) = r == k ? 1.0 : 0.0;
  }
  const Tensor z = Tensor::from_rows({{0.5, -1.5}, {2.0, 3.0}});
  const Tensor a = model::decode(m, z);
  EXPECT_TRUE(a == z);
  EXPECT_TRUE(model::decode(m, z) == a);
  EXPECT_THROW(model::decode(m, Tensor(2, 3)), ShapeError);
}

TEST(Prior, MeansUseOnlyPredecessors) {
  const model::LanmModel m(small_config(3, 3, 3), 7);
  Tensor z = Tensor::from_rows({{0.1, 0.2, 0.3}});
  Tensor u(1, 3);
  u(0, 2) = 1.0;
  const Tensor a = model::prior_means(m, z, u);
  z(0, 2) = 9.0;  // node 3 is nobody's parent
  const Tensor b = model::prior_means(m, z, u);
  EXPECT_TRUE(a == b);
  z(0, 0) = -4.0;
  const Tensor c = model::prior_means(m, z, u);
  EXPECT_EQ(c(0, 0), a(0, 0));
  EXPECT_NE(c(0, 1), a(0, 1));
}
