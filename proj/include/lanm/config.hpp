// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lanm/dataset.hpp"
#include "lanm/error.hpp"
#include "lanm/eval.hpp"
#include "lanm/io.hpp"
#include "lanm/model.hpp"
#include "lanm/scm.hpp"
#include "lanm/train.hpp"

namespace lanm::config {

namespace fs = std::filesystem;
using io::json;

/// Everything one experiment needs. Nodes are 1-based in JSON.
struct ExperimentConfig {
  scm::ScmSpec scm = scm::synthetic_chain(2);
  data::NoiseConfig noise;
  data::MixingConfig mixing;
  std::uint64_t mixing_seed = 0;  // 0 = derive from the experiment seed
  model::ModelConfig model;       // ell / u_dim / x_dim are filled from the data
  train::TrainConfig train;
  eval::Thresholds eval;
  std::optional<bool> eval_pnl;  // unset = follow the dataset
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1};
  std::optional<std::string> fmri_path;

  data::GenConfig gen_config() const {
    data::GenConfig g;
    g.spec = scm;
    g.noise = noise;
    g.mixing = mixing;
    g.seed = seed;
    g.mixing_seed = mixing_seed;
    g.fmri_path = fmri_path;
    return g;
  }

  /// Model architecture for a dataset of the given shape.
  model::ModelConfig model_for(std::size_t ell, std::size_t segments, std::size_t dim) const {
    model::ModelConfig m = model;
    m.ell = ell;
    m.u_dim = segments;
    m.x_dim = dim;
    m.validate();
    return m;
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) throw ConfigError("config: unknown key '" + where + "." + it.key() + "'");
  }
}

template <class T>
T get(const json& j, const std::string& where, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

inline std::pair<double, double> get_range(const json& j, const std::string& where, const std::string& key,
                                           std::pair<double, double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError("config: '" + where + "." + key + "' must be [lo, hi]");
  }
  std::pair<double, double> r{v[0].get<double>(), v[1].get<double>()};
  if (!(r.first <= r.second)) throw ConfigError("config: '" + where + "." + key + "' needs lo <= hi");
  return r;
}

inline scm::ScmSpec parse_scm(const json& j) {
  check_keys(j, "scm", {"ell", "adjacency", "equations", "lambda_range", "violation_nodes", "pnl"});
  const auto ell = get<std::size_t>(j, "scm", "ell", 2);
  if (ell == 0) throw ConfigError("config: scm.ell must be >= 1");
  scm::ScmSpec s = scm::synthetic_chain(ell);
  if (j.contains("adjacency")) s.adjacency = get<std::vector<std::vector<int>>>(j, "scm", "adjacency", {});
  if (j.contains("equations")) {
    s.equations.clear();
    for (const auto& e : j.at("equations")) {
      if (!e.is_string()) throw ConfigError("config: scm.equations entries must be strings");
      s.equations.push_back(scm::parse_equation(e.get<std::string>()));
    }
  }
  s.lambda_range = get_range(j, "scm", "lambda_range", s.lambda_range);
  for (auto v : get<std::vector<std::size_t>>(j, "scm", "violation_nodes", {})) {
    if (v == 0) throw ConfigError("config: scm.violation_nodes are 1-based");
    s.violation_nodes.push_back(v - 1);
  }
  if (j.contains("pnl") && !j.at("pnl").is_null()) {
    std::vector<scm::Distortion> d;
    for (const auto& p : j.at("pnl")) {
      if (!p.is_string()) throw ConfigError("config: scm.pnl entries must be strings");
      d.push_back(scm::parse_distortion(p.get<std::string>()));
    }
    s.distortions = std::move(d);
  }
  s.validate();
  return s;
}

}  // namespace detail

inline ExperimentConfig from_json(const json& j) {
  detail::check_keys(j, "<root>", {"scm", "noise", "mixing", "model", "train", "eval", "seed", "seeds", "fmri"});
  ExperimentConfig c;
  if (j.contains("scm")) c.scm = detail::parse_scm(j.at("scm"));

  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::check_keys(n, "noise", {"segments", "samples_per_segment", "alpha_range", "beta_range",
                                    "certification_segment"});
    c.noise.segments = detail::get(n, "noise", "segments", c.noise.segments);
    c.noise.samples_per_segment = detail::get(n, "noise", "samples_per_segment", c.noise.samples_per_segment);
    c.noise.ranges.alpha = detail::get_range(n, "noise", "alpha_range", c.noise.ranges.alpha);
    c.noise.ranges.beta = detail::get_range(n, "noise", "beta_range", c.noise.ranges.beta);
    c.noise.certification_segment =
        detail::get(n, "noise", "certification_segment", c.noise.certification_segment);
    if (c.noise.segments == 0 || c.noise.samples_per_segment == 0) {
      throw ConfigError("config: noise.segments and noise.samples_per_segment must be >= 1");
    }
    if (!(c.noise.ranges.beta.first > 0.0)) throw ConfigError("config: noise.beta_range must be positive");
  }

  if (j.contains("mixing")) {
    const auto& m = j.at("mixing");
    detail::check_keys(m, "mixing", {"dim", "identity", "slope", "max_condition", "standardize", "seed"});
    c.mixing.dim = detail::get(m, "mixing", "dim", c.mixing.dim);
    c.mixing.identity = detail::get(m, "mixing", "identity", c.mixing.identity);
    c.mixing.slope = detail::get(m, "mixing", "slope", c.mixing.slope);
    c.mixing.max_condition = detail::get(m, "mixing", "max_condition", c.mixing.max_condition);
    c.mixing.standardize = detail::get(m, "mixing", "standardize", c.mixing.standardize);
    c.mixing_seed = detail::get<std::uint64_t>(m, "mixing", "seed", 0);
    if (!(c.mixing.max_condition > 1.0)) throw ConfigError("config: mixing.max_condition must be > 1");
    if (c.mixing.identity && c.mixing.dim != 0 && c.mixing.dim != c.scm.ell) {
      throw ConfigError("config: identity mixing needs mixing.dim == scm.ell");
    }
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, "model", {"hidden", "gamma", "slope", "obs_var", "logvar_clamp", "independent_prior"});
    c.model.hidden = detail::get(m, "model", "hidden", c.model.hidden);
    c.model.gamma = detail::get(m, "model", "gamma", c.model.gamma);
    c.model.slope = detail::get(m, "model", "slope", c.model.slope);
    c.model.obs_var = detail::get(m, "model", "obs_var", c.model.obs_var);
    c.model.logvar_clamp = detail::get(m, "model", "logvar_clamp", c.model.logvar_clamp);
    c.model.independent_prior = detail::get(m, "model", "independent_prior", c.model.independent_prior);
  }
  c.model.validate();

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, "train", {"lr", "beta1", "beta2", "eps", "batch_size", "epochs", "checkpoint_interval"});
    c.train.adam.lr = detail::get(t, "train", "lr", c.train.adam.lr);
    c.train.adam.beta1 = detail::get(t, "train", "beta1", c.train.adam.beta1);
    c.train.adam.beta2 = detail::get(t, "train", "beta2", c.train.adam.beta2);
    c.train.adam.eps = detail::get(t, "train", "eps", c.train.adam.eps);
    c.train.batch_size = detail::get(t, "train", "batch_size", c.train.batch_size);
    c.train.epochs = detail::get(t, "train", "epochs", c.train.epochs);
    c.train.checkpoint_interval = detail::get(t, "train", "checkpoint_interval", c.train.checkpoint_interval);
  }
  c.train.validate();

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::check_keys(e, "eval", {"mask_tau", "affine_r", "affine_r2", "monotone_rho", "pnl"});
    c.eval.mask_tau = detail::get(e, "eval", "mask_tau", c.eval.mask_tau);
    c.eval.affine_r = detail::get(e, "eval", "affine_r", c.eval.affine_r);
    c.eval.affine_r2 = detail::get(e, "eval", "affine_r2", c.eval.affine_r2);
    c.eval.monotone_rho = detail::get(e, "eval", "monotone_rho", c.eval.monotone_rho);
    if (e.contains("pnl") && !e.at("pnl").is_null()) c.eval_pnl = detail::get(e, "eval", "pnl", false);
  }

  c.seed = detail::get<std::uint64_t>(j, "<root>", "seed", c.seed);
  if (j.contains("seeds")) {
    c.seeds = detail::get<std::vector<std::uint64_t>>(j, "<root>", "seeds", {});
    if (c.seeds.empty()) throw ConfigError("config: seeds must be a non-empty list");
  } else {
    c.seeds = {c.seed};
  }

  if (j.contains("fmri") && !j.at("fmri").is_null()) {
    const auto& f = j.at("fmri");
    detail::check_keys(f, "fmri", {"path"});
    if (f.contains("path") && !f.at("path").is_null()) c.fmri_path = detail::get<std::string>(f, "fmri", "path", "");
  }
  return c;
}

/// The fully resolved document; feeding it back through from_json is a fixed point.
inline json to_json(const ExperimentConfig& c) {
  json j;
  json s = data::spec_to_json(c.scm);
  j["scm"] = s;
  j["noise"] = {{"segments", c.noise.segments},
                {"samples_per_segment", c.noise.samples_per_segment},
                {"alpha_range", {c.noise.ranges.alpha.first, c.noise.ranges.alpha.second}},
                {"beta_range", {c.noise.ranges.beta.first, c.noise.ranges.beta.second}},
                {"certification_segment", c.noise.certification_segment}};
  j["mixing"] = {{"dim", c.mixing.dim},
                 {"identity", c.mixing.identity},
                 {"slope", c.mixing.slope},
                 {"max_condition", c.mixing.max_condition},
                 {"standardize", c.mixing.standardize},
                 {"seed", c.mixing_seed}};
  j["model"] = {{"hidden", c.model.hidden},
                {"gamma", c.model.gamma},
                {"slope", c.model.slope},
                {"obs_var", c.model.obs_var},
                {"logvar_clamp", c.model.logvar_clamp},
                {"independent_prior", c.model.independent_prior}};
  j["train"] = {{"lr", c.train.adam.lr},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"checkpoint_interval", c.train.checkpoint_interval}};
  j["eval"] = {{"mask_tau", c.eval.mask_tau},
               {"affine_r", c.eval.affine_r},
               {"affine_r2", c.eval.affine_r2},
               {"monotone_rho", c.eval.monotone_rho},
               {"pnl", c.eval_pnl ? json(*c.eval_pnl) : json(nullptr)}};
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["fmri"] = {{"path", c.fmri_path ? json(*c.fmri_path) : json(nullptr)}};
  return j;
}

inline ExperimentConfig load(const fs::path& path) { return from_json(io::read_json(path)); }

}  // namespace lanm::config
