// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lanm/autodiff.hpp"
#include "lanm/error.hpp"
#include "lanm/rng.hpp"
#include "lanm/tensor.hpp"

namespace lanm::model {

using ad::NodeId;
using ad::Tape;

struct ModelConfig {
  std::size_t ell = 2;
  std::size_t u_dim = 1;  // one-hot width (number of segments)
  std::size_t x_dim = 2;
  std::size_t hidden = 64;
  double gamma = 0.01;
  double slope = 0.01;
  double obs_var = 0.01;
  double logvar_clamp = 10.0;
  // Forces every mask to zero: the prior factorizes given u (iVAE-style ablation).
  bool independent_prior = false;

  void validate() const {
    if (ell == 0 || u_dim == 0 || x_dim == 0 || hidden == 0) throw ConfigError("model: sizes must be >= 1");
    if (!(obs_var > 0.0)) throw ConfigError("model: observation variance must be positive");
    if (!(gamma >= 0.0)) throw ConfigError("model: gamma must be >= 0");
    if (!(logvar_clamp > 0.0)) throw ConfigError("model: log-variance clamp must be positive");
  }
};

/// Named trainable tensors in a fixed order.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  std::size_t add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    values.push_back(std::move(t));
    return values.size() - 1;
  }
  std::size_t size() const { return values.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.size();
    return n;
  }
};

struct Linear {
  std::size_t weight = 0;  // in x out
  std::size_t bias = 0;    // 1 x out
};

struct Mlp {
  std::array<Linear, 3> layers;
};

/// Conditional-Gaussian masked autoregressive VAE.
class LanmModel {
 public:
  LanmModel() = default;

  LanmModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "model-init"));
    const std::size_t h = cfg_.hidden;
    const std::size_t ell = cfg_.ell;
    const std::size_t m = cfg_.u_dim;
    encoder_ = make_mlp(rng, "encoder", cfg_.x_dim + m, h, h);
    for (std::size_t i = 0; i < ell; ++i) {
      post_.push_back(make_mlp(rng, "posterior." + std::to_string(i), h + i + m, h, 2));
    }
    for (std::size_t i = 0; i < ell; ++i) {
      prior_.push_back(make_mlp(rng, "prior." + std::to_string(i), i + m, h, 2));
    }
    for (std::size_t i = 0; i < ell; ++i) {
      if (i == 0 || cfg_.independent_prior) {
        masks_.emplace_back(std::nullopt);
      } else {
        masks_.emplace_back(make_linear(rng, "mask." + std::to_string(i), m, i));
      }
    }
    decoder_ = make_mlp(rng, "decoder", ell, h, cfg_.x_dim);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }
  const Mlp& posterior_head(std::size_t i) const { return post_.at(i); }
  const Mlp& prior_head(std::size_t i) const { return prior_.at(i); }
  const std::optional<Linear>& mask_net(std::size_t i) const { return masks_.at(i); }

  /// m_i(u) for one-hot segment m is row m of the weight plus the bias, so the
  /// whole mask net is a segments x i table per node.
  std::vector<Tensor> mask_table() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < cfg_.ell; ++i) {
      Tensor t(cfg_.u_dim, i);
      if (masks_[i]) {
        const Tensor& w = params_.values[masks_[i]->weight];
        const Tensor& b = params_.values[masks_[i]->bias];
        for (std::size_t r = 0; r < cfg_.u_dim; ++r)
          for (std::size_t c = 0; c < i; ++c) t(r, c) = w(r, c) + b[c];
      }
      out.push_back(std::move(t));
    }
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Mlp encoder_;
  std::vector<Mlp> post_;
  std::vector<Mlp> prior_;
  std::vector<std::optional<Linear>> masks_;
  Mlp decoder_;

  Linear make_linear(Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w(in, out);
    for (auto& v : w.values()) v = rng.uniform(-limit, limit);
    Linear l;
    l.weight = params_.add(name + ".w", std::move(w));
    l.bias = params_.add(name + ".b", Tensor(1, out));
    return l;
  }

  Mlp make_mlp(Rng& rng, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
    Mlp m;
    m.layers[0] = make_linear(rng, name + ".0", in, hidden);
    m.layers[1] = make_linear(rng, name + ".1", hidden, hidden);
    m.layers[2] = make_linear(rng, name + ".2", hidden, out);
    return m;
  }
};

/// Model parameters registered on one tape.
class BoundModel {
 public:
  BoundModel(const LanmModel& model, Tape& tape, bool trainable = true) : model_(model), tape_(tape) {
    ids_.reserve(model.params().size());
    for (const auto& v : model.params().values) ids_.push_back(trainable ? tape.parameter(v) : tape.constant(v));
  }

  const LanmModel& model() const { return model_; }
  Tape& tape() { return tape_; }
  NodeId param(std::size_t k) const { return ids_[k]; }
  const std::vector<NodeId>& param_ids() const { return ids_; }

  NodeId linear(const Linear& l, NodeId in) {
    const NodeId y = tape_.matmul(in, ids_[l.weight]);
    return tape_.add(y, tape_.broadcast_row(ids_[l.bias], tape_.value(in).rows()));
  }

  NodeId mlp(const Mlp& m, NodeId in) {
    const double slope = model_.config().slope;
    NodeId h = tape_.leaky_relu(linear(m.layers[0], in), slope);
    h = tape_.leaky_relu(linear(m.layers[1], h), slope);
    return linear(m.layers[2], h);
  }

 private:
  const LanmModel& model_;
  Tape& tape_;
  std::vector<NodeId> ids_;
};

struct NodeOutputs {
  NodeId mean;
  NodeId logvar;  // clamped
};

/// Graph pieces of one posterior pass.
struct PosteriorGraph {
  NodeId z;                          // batch x ell
  std::vector<NodeId> z_cols;        // batch x 1 each
  std::vector<NodeOutputs> heads;
  std::vector<std::optional<NodeId>> masks;  // batch x i each (absent for node 0)
};

/// One mask node per latent (absent for node 0): batch x i.
inline std::vector<std::optional<NodeId>> mask_values(BoundModel& bm, NodeId u) {
  auto& tape = bm.tape();
  const auto& cfg = bm.model().config();
  const std::size_t batch = tape.value(u).rows();
  std::vector<std::optional<NodeId>> out;
  for (std::size_t i = 0; i < cfg.ell; ++i) {
    if (i == 0) {
      out.emplace_back(std::nullopt);
    } else if (const auto& net = bm.model().mask_net(i); net) {
      out.emplace_back(bm.linear(*net, u));
    } else {
      out.emplace_back(tape.constant(Tensor(batch, i)));
    }
  }
  return out;
}

namespace detail {
inline NodeOutputs split_head(Tape& tape, NodeId out, double clamp, std::size_t batch_index, std::size_t node) {
  const auto& v = tape.value(out);
  if (!v.all_finite()) {
    throw NumericError("non-finite head output for node " + std::to_string(node + 1) + " in batch " +
                       std::to_string(batch_index));
  }
  const NodeId mean = tape.slice_cols(out, 0, 1);
  const NodeId logvar = tape.clamp(tape.slice_cols(out, 1, 2), -clamp, clamp);
  return {mean, logvar};
}

inline NodeId masked_parents(Tape& tape, const std::vector<NodeId>& z_cols, std::size_t i, NodeId mask) {
  const NodeId prev = tape.concat_cols(std::span<const NodeId>(z_cols.data(), i));
  return tape.mul(prev, mask);
}
}  // namespace detail

/// Autoregressive reparameterized draw z_i = mu_i + sigma_i * noise_i.
inline PosteriorGraph posterior_sample(BoundModel& bm, NodeId x, NodeId u, NodeId noise,
                                       std::size_t batch_index = 0) {
  auto& tape = bm.tape();
  const auto& m = bm.model();
  const auto& cfg = m.config();
  const std::size_t batch = tape.value(x).rows();
  if (tape.value(noise).rows() != batch || tape.value(noise).cols() != cfg.ell) {
    throw ShapeError("posterior_sample: noise must be batch x ell");
  }
  PosteriorGraph g;
  g.masks = mask_values(bm, u);
  const NodeId features = bm.mlp(m.encoder(), tape.concat_cols({x, u}));
  for (std::size_t i = 0; i < cfg.ell; ++i) {
    NodeId input = i == 0 ? tape.concat_cols({features, u})
                          : tape.concat_cols({features, detail::masked_parents(tape, g.z_cols, i, *g.masks[i]), u});
    const NodeId out = bm.mlp(m.posterior_head(i), input);
    const auto head = detail::split_head(tape, out, cfg.logvar_clamp, batch_index, i);
    const NodeId sigma = tape.exp(tape.scale(head.logvar, 0.5));
    const NodeId eps = tape.slice_cols(noise, i, i + 1);
    g.z_cols.push_back(tape.add(head.mean, tape.mul(sigma, eps)));
    g.heads.push_back(head);
  }
  g.z = tape.concat_cols(g.z_cols);
  return g;
}

/// Prior heads evaluated on given parent columns (one per latent).
inline std::vector<NodeOutputs> prior_params(BoundModel& bm, const std::vector<NodeId>& z_cols,
                                             const std::vector<std::optional<NodeId>>& masks, NodeId u,
                                             std::size_t batch_index = 0) {
  auto& tape = bm.tape();
  const auto& m = bm.model();
  const auto& cfg = m.config();
  std::vector<NodeOutputs> out;
  for (std::size_t i = 0; i < cfg.ell; ++i) {
    NodeId input = i == 0 ? u : tape.concat_cols({detail::masked_parents(tape, z_cols, i, *masks[i]), u});
    out.push_back(detail::split_head(tape, bm.mlp(m.prior_head(i), input), cfg.logvar_clamp, batch_index, i));
  }
  return out;
}

/// Sum over rows and nodes of KL(N(mq, exp lq) || N(mp, exp lp)), divided by the batch size.
inline NodeId kl_conditional_gaussian(Tape& tape, const std::vector<NodeOutputs>& q,
                                      const std::vector<NodeOutputs>& p) {
  const std::size_t batch = tape.value(q.at(0).mean).rows();
  std::vector<NodeId> terms;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const NodeId dlv = tape.sub(q[i].logvar, p[i].logvar);
    const NodeId diff = tape.sub(q[i].mean, p[i].mean);
    const NodeId ratio = tape.exp(dlv);
    const NodeId maha = tape.mul(tape.square(diff), tape.exp(tape.scale(p[i].logvar, -1.0)));
    // 0.5 * (exp(dlv) + maha - dlv - 1) per row
    const NodeId inner = tape.sub(tape.add(ratio, maha), dlv);
    terms.push_back(tape.scale(tape.sum(inner), 0.5));
  }
  NodeId total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
  // the -1/2 per row and node
  const NodeId offset = tape.constant(Tensor::scalar(-0.5 * static_cast<double>(batch * q.size())));
  return tape.scale(tape.add(total, offset), 1.0 / static_cast<double>(batch));
}

/// Closed-form Gaussian KL, one scalar pair.
inline double kl_gaussian(double mean_q, double var_q, double mean_p, double var_p) {
  return 0.5 * std::log(var_p / var_q) + (var_q + (mean_q - mean_p) * (mean_q - mean_p)) / (2.0 * var_p) - 0.5;
}

inline NodeId decode(BoundModel& bm, NodeId z) { return bm.mlp(bm.model().decoder(), z); }

struct ElboBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

struct ElboGraph {
  NodeId reconstruction;
  NodeId kl;
  NodeId l1;
  NodeId total;
  PosteriorGraph posterior;

  ElboBreakdown values(const Tape& tape) const {
    return {tape.value(reconstruction)[0], tape.value(kl)[0], tape.value(l1)[0], tape.value(total)[0]};
  }
};

/// total = reconstruction - KL - gamma * L1, every term a per-row batch mean.
inline ElboGraph elbo(BoundModel& bm, const Tensor& x, const Tensor& u, const Tensor& noise,
                      std::size_t batch_index = 0) {
  auto& tape = bm.tape();
  const auto& cfg = bm.model().config();
  if (x.rows() == 0) throw ShapeError("elbo: empty batch");
  if (x.cols() != cfg.x_dim || u.cols() != cfg.u_dim || u.rows() != x.rows()) {
    throw ShapeError("elbo: batch shapes " + x.shape_string() + ", " + u.shape_string() +
                     " do not match the model");
  }
  const double batch = static_cast<double>(x.rows());
  const NodeId xn = tape.constant(x);
  const NodeId un = tape.constant(u);
  const NodeId en = tape.constant(noise);

  ElboGraph g;
  g.posterior = posterior_sample(bm, xn, un, en, batch_index);
  const auto prior = prior_params(bm, g.posterior.z_cols, g.posterior.masks, un, batch_index);
  g.kl = kl_conditional_gaussian(tape, g.posterior.heads, prior);

  const NodeId xhat = decode(bm, g.posterior.z);
  const NodeId sq = tape.sum(tape.square(tape.sub(xn, xhat)));
  const double log_norm = -0.5 * static_cast<double>(cfg.x_dim) * std::log(2.0 * std::numbers::pi * cfg.obs_var);
  g.reconstruction = tape.add(tape.scale(sq, -0.5 / (cfg.obs_var * batch)), tape.constant(Tensor::scalar(log_norm)));

  std::vector<NodeId> l1_terms;
  for (const auto& mk : g.posterior.masks) {
    if (mk && tape.value(*mk).cols() > 0) l1_terms.push_back(tape.sum(tape.abs(*mk)));
  }
  if (l1_terms.empty()) {
    g.l1 = tape.constant(Tensor::scalar(0.0));
  } else {
    NodeId s = l1_terms[0];
    for (std::size_t i = 1; i < l1_terms.size(); ++i) s = tape.add(s, l1_terms[i]);
    g.l1 = tape.scale(s, 1.0 / batch);
  }
  g.total = tape.sub(tape.sub(g.reconstruction, g.kl), tape.scale(g.l1, cfg.gamma));
  if (!std::isfinite(tape.value(g.total)[0])) {
    throw NumericError("non-finite ELBO in batch " + std::to_string(batch_index));
  }
  return g;
}

inline ElboBreakdown evaluate_elbo(const LanmModel& model, const Tensor& x, const Tensor& u, const Tensor& noise) {
  Tape tape;
  BoundModel bm(model, tape, false);
  return elbo(bm, x, u, noise).values(tape);
}

// --- value-only helpers ---------------------------------------------------------

/// Posterior means (noise = 0), evaluated in chunks.
inline Tensor posterior_means(const LanmModel& model, const Tensor& x, const Tensor& u, std::size_t chunk = 4096) {
  const std::size_t ell = model.config().ell;
  Tensor out(x.rows(), ell);
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t end = std::min(x.rows(), begin + chunk);
    Tape tape;
    BoundModel bm(model, tape, false);
    const NodeId xn = tape.constant(slice_rows(x, begin, end));
    const NodeId un = tape.constant(slice_rows(u, begin, end));
    const NodeId en = tape.constant(Tensor(end - begin, ell));
    const auto g = posterior_sample(bm, xn, un, en);
    const auto& z = tape.value(g.z);
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t c = 0; c < ell; ++c) out(r, c) = z(r - begin, c);
  }
  return out;
}

inline Tensor decode(const LanmModel& model, const Tensor& z) {
  if (z.cols() != model.config().ell) throw ShapeError("decode: z must be batch x ell");
  Tape tape;
  BoundModel bm(model, tape, false);
  return tape.value(decode(bm, tape.constant(z)));
}

/// Prior means for every node given (teacher-forced) latent values.
inline Tensor prior_means(const LanmModel& model, const Tensor& z, const Tensor& u) {
  const std::size_t ell = model.config().ell;
  Tape tape;
  BoundModel bm(model, tape, false);
  const NodeId zn = tape.constant(z);
  const NodeId un = tape.constant(u);
  std::vector<NodeId> cols;
  for (std::size_t i = 0; i < ell; ++i) cols.push_back(tape.slice_cols(zn, i, i + 1));
  const auto masks = mask_values(bm, un);
  const auto heads = prior_params(bm, cols, masks, un);
  Tensor out(z.rows(), ell);
  for (std::size_t i = 0; i < ell; ++i) {
    const auto& mu = tape.value(heads[i].mean);
    for (std::size_t r = 0; r < z.rows(); ++r) out(r, i) = mu[r];
  }
  return out;
}

}  // namespace lanm::model
