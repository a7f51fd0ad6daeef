// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lanm/dataset.hpp"
#include "lanm/error.hpp"
#include "lanm/io.hpp"
#include "lanm/model.hpp"
#include "lanm/rng.hpp"
#include "lanm/tensor.hpp"

namespace lanm::train {

namespace fs = std::filesystem;
using io::json;

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const std::vector<Tensor>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.rows(), p.cols());
      s.v.emplace_back(p.rows(), p.cols());
    }
    return s;
  }
};

/// One bias-corrected Adam descent step on every tensor.
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                      const AdamConfig& cfg, const std::vector<std::string>* names = nullptr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].size() || state.m[k].size() != params[k].size()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(k));
    }
    if (!grads[k].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter " +
                         (names ? (*names)[k] : std::to_string(k)));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 256;
  std::size_t epochs = 600;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // epochs; 0 = only at the end

  void validate() const {
    if (!(adam.lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("train: Adam betas must lie in [0, 1)");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  model::ElboBreakdown mean;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  /// epoch, recon, kl, l1, total (wall-clock is kept out so the file is reproducible).
  std::string to_csv() const {
    std::ostringstream ss;
    ss << "epoch,recon,kl,l1,total\n";
    for (const auto& e : epochs) {
      ss << e.epoch << ',' << io::format_double(e.mean.reconstruction) << ',' << io::format_double(e.mean.kl) << ','
         << io::format_double(e.mean.l1) << ',' << io::format_double(e.mean.total) << '\n';
    }
    return ss.str();
  }
};

/// Model plus optimizer position; what a checkpoint holds.
struct TrainState {
  model::LanmModel model;
  AdamState adam;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
};

using CheckpointHook = std::function<void(const TrainState&)>;

/// Maximizes the ELBO for `config.epochs` further epochs. Each epoch visits a
/// seeded permutation of the rows; the per-epoch stream is derived from
/// (seed, epoch), so a resumed run continues the same sequence.
inline TrainLog train(TrainState& state, const data::Dataset& dataset, const TrainConfig& config,
                      const CheckpointHook& checkpoint = {}) {
  config.validate();
  const auto& mcfg = state.model.config();
  if (dataset.dim() != mcfg.x_dim || dataset.segments != mcfg.u_dim) {
    throw ConfigError("train: dataset (D=" + std::to_string(dataset.dim()) + ", M=" +
                      std::to_string(dataset.segments) + ") does not match the model (D=" +
                      std::to_string(mcfg.x_dim) + ", M=" + std::to_string(mcfg.u_dim) + ")");
  }
  if (state.adam.m.empty()) state.adam = AdamState::zeros_like(state.model.params().values);
  const Tensor u_all = dataset.one_hot();
  const std::size_t rows = dataset.rows();
  const std::size_t ell = mcfg.ell;
  TrainLog log;

  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t epoch = state.epoch;
    Rng rng(derive_seed(config.seed, "epoch", epoch));
    const auto perm = rng.permutation(rows);
    model::ElboBreakdown sum;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < rows; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(rows, begin + config.batch_size);
      const std::span<const std::size_t> idx(perm.data() + begin, end - begin);
      const Tensor xb = gather_rows(dataset.x, idx);
      const Tensor ub = gather_rows(u_all, idx);
      Tensor noise(idx.size(), ell);
      for (auto& v : noise.values()) v = rng.normal();

      ad::Tape tape;
      model::BoundModel bm(state.model, tape);
      const auto g = model::elbo(bm, xb, ub, noise, batch_index);
      const auto vals = g.values(tape);
      const auto grads = tape.backward(tape.scale(g.total, -1.0));
      std::vector<Tensor> gs;
      gs.reserve(bm.param_ids().size());
      for (auto id : bm.param_ids()) gs.push_back(grads.ref(id));
      adam_step(state.model.params().values, gs, state.adam, config.adam, &state.model.params().names);

      const double w = static_cast<double>(idx.size());
      sum.reconstruction += w * vals.reconstruction;
      sum.kl += w * vals.kl;
      sum.l1 += w * vals.l1;
      sum.total += w * vals.total;
      seen += idx.size();
    }
    const double n = static_cast<double>(seen);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean = {sum.reconstruction / n, sum.kl / n, sum.l1 / n, sum.total / n};
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    ++state.epoch;
    if (checkpoint && config.checkpoint_interval > 0 && state.epoch % config.checkpoint_interval == 0) {
      checkpoint(state);
    }
  }
  if (checkpoint) checkpoint(state);
  return log;
}

// --- checkpoints ------------------------------------------------------------------

inline json model_config_to_json(const model::ModelConfig& c) {
  return {{"ell", c.ell},          {"u_dim", c.u_dim},   {"x_dim", c.x_dim},
          {"hidden", c.hidden},    {"gamma", c.gamma},   {"slope", c.slope},
          {"obs_var", c.obs_var},  {"logvar_clamp", c.logvar_clamp},
          {"independent_prior", c.independent_prior}};
}

inline model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  c.ell = j.at("ell").get<std::size_t>();
  c.u_dim = j.at("u_dim").get<std::size_t>();
  c.x_dim = j.at("x_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  c.slope = j.at("slope").get<double>();
  c.obs_var = j.at("obs_var").get<double>();
  c.logvar_clamp = j.at("logvar_clamp").get<double>();
  c.independent_prior = j.at("independent_prior").get<bool>();
  return c;
}

inline std::string param_file(const std::string& name) { return "param." + name + ".bin"; }

inline void save_checkpoint(const TrainState& s, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& ps = s.model.params();
  json files = json::array();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    io::write_tensor(dir / param_file(ps.names[k]), ps.values[k]);
    files.push_back(param_file(ps.names[k]));
  }
  const bool has_adam = !s.adam.m.empty();
  if (has_adam) {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      io::write_tensor(dir / ("adam_m." + ps.names[k] + ".bin"), s.adam.m[k]);
      io::write_tensor(dir / ("adam_v." + ps.names[k] + ".bin"), s.adam.v[k]);
    }
  }
  json m;
  m["format"] = "lanm-checkpoint";
  m["format_version"] = io::kFormatVersion;
  m["architecture"] = model_config_to_json(s.model.config());
  m["epoch"] = s.epoch;
  m["step"] = s.adam.step;
  m["seed"] = s.seed;
  m["parameters"] = ps.names;
  m["files"] = files;
  m["adam_state"] = has_adam;
  io::write_json(dir / "manifest.json", m);
}

inline TrainState load_checkpoint(const fs::path& dir) {
  const json m = io::read_json(dir / "manifest.json");
  if (m.value("format", "") != "lanm-checkpoint") throw IoError(dir.string() + ": not a checkpoint directory");
  TrainState s;
  s.seed = m.at("seed").get<std::uint64_t>();
  s.epoch = m.at("epoch").get<std::size_t>();
  s.model = model::LanmModel(model_config_from_json(m.at("architecture")), s.seed);
  auto& ps = s.model.params();
  const auto names = m.at("parameters").get<std::vector<std::string>>();
  if (names != ps.names) throw IoError(dir.string() + ": parameter list does not match the architecture");
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor t = io::read_tensor(dir / param_file(ps.names[k]));
    if (t.rows() != ps.values[k].rows() || t.cols() != ps.values[k].cols()) {
      throw IoError(dir.string() + ": shape mismatch for " + ps.names[k]);
    }
    ps.values[k] = std::move(t);
  }
  if (m.at("adam_state").get<bool>()) {
    s.adam = AdamState::zeros_like(ps.values);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      s.adam.m[k] = io::read_tensor(dir / ("adam_m." + ps.names[k] + ".bin"));
      s.adam.v[k] = io::read_tensor(dir / ("adam_v." + ps.names[k] + ".bin"));
    }
    s.adam.step = m.at("step").get<std::uint64_t>();
  }
  return s;
}

}  // namespace lanm::train
