// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lanm/dataset.hpp"
#include "lanm/io.hpp"
#include "lanm/metrics.hpp"
#include "lanm/model.hpp"

namespace lanm::eval {

using io::json;
using metrics::Adjacency;

enum class Verdict { identified_affine, identified_monotone, not_identified };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::identified_affine: return "IDENTIFIED-AFFINE";
    case Verdict::identified_monotone: return "IDENTIFIED-MONOTONE";
    case Verdict::not_identified: return "NOT-IDENTIFIED";
  }
  return "?";
}

struct Thresholds {
  double affine_r = 0.8;
  double affine_r2 = 0.8;
  double monotone_rho = 0.9;
  double mask_tau = 0.1;

  json to_json() const {
    return {{"affine_r", affine_r}, {"affine_r2", affine_r2}, {"monotone_rho", monotone_rho}, {"mask_tau", mask_tau}};
  }
};

inline Verdict classify(double abs_r, double r2, std::optional<double> rho, const Thresholds& t) {
  if (abs_r >= t.affine_r && r2 >= t.affine_r2) return Verdict::identified_affine;
  if (rho && *rho >= t.monotone_rho) return Verdict::identified_monotone;
  return Verdict::not_identified;
}

struct PartitionRow {
  std::size_t node = 0;
  bool violated = false;
  Verdict verdict = Verdict::not_identified;
};

struct Partition {
  std::vector<PartitionRow> rows;
  std::size_t satisfying_identified = 0;
  std::size_t satisfying_total = 0;
  std::size_t violating_not_identified = 0;
  std::size_t violating_total = 0;

  bool consistent() const {
    return satisfying_identified == satisfying_total && violating_not_identified == violating_total;
  }

  json to_json() const {
    json nodes = json::array();
    for (const auto& r : rows) {
      nodes.push_back({{"node", r.node + 1}, {"violated", r.violated}, {"verdict", std::string(to_string(r.verdict))}});
    }
    return {{"nodes", nodes},
            {"satisfying_identified", satisfying_identified},
            {"satisfying_total", satisfying_total},
            {"violating_not_identified", violating_not_identified},
            {"violating_total", violating_total},
            {"consistent", consistent()}};
  }
};

/// Tabulates per-node verdicts against the known violation set.
inline Partition partition_report(const std::vector<Verdict>& verdicts, const std::vector<std::size_t>& violation_nodes) {
  Partition p;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const bool violated = std::find(violation_nodes.begin(), violation_nodes.end(), i) != violation_nodes.end();
    const bool identified = verdicts[i] != Verdict::not_identified;
    p.rows.push_back({i, violated, verdicts[i]});
    if (violated) {
      ++p.violating_total;
      p.violating_not_identified += identified ? 0 : 1;
    } else {
      ++p.satisfying_total;
      p.satisfying_identified += identified ? 1 : 0;
    }
  }
  return p;
}

/// Edge j -> i in the model's own labels iff the mean over segments of |m_i(u)_j| exceeds tau.
inline Adjacency estimated_adjacency(const model::LanmModel& model, double tau) {
  const std::size_t ell = model.config().ell;
  Adjacency a(ell, std::vector<int>(ell, 0));
  const auto masks = model.mask_table();
  for (std::size_t i = 1; i < ell; ++i) {
    const auto& t = masks[i];
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t m = 0; m < t.rows(); ++m) s += std::fabs(t(m, j));
      if (t.rows() > 0 && s / static_cast<double>(t.rows()) > tau) a[i][j] = 1;
    }
  }
  return a;
}

/// Re-expresses an estimated graph in ground-truth labels; assignment[true] = estimated.
inline Adjacency relabel(const Adjacency& est, const std::vector<std::size_t>& assignment) {
  const std::size_t ell = est.size();
  Adjacency out(ell, std::vector<int>(ell, 0));
  for (std::size_t a = 0; a < ell; ++a)
    for (std::size_t b = 0; b < ell; ++b) out[a][b] = est[assignment[a]][assignment[b]];
  return out;
}

inline Adjacency extract_adjacency(const model::LanmModel& model, const std::vector<std::size_t>& assignment,
                                   double tau) {
  return relabel(estimated_adjacency(model, tau), assignment);
}

struct EvalReport {
  metrics::MpcResult mpc;
  std::vector<double> r2;
  std::vector<double> scale;
  std::optional<std::vector<double>> rho;
  Adjacency adjacency;  // in ground-truth labels
  std::optional<Adjacency> true_adjacency;
  std::optional<std::size_t> shd;
  std::vector<Verdict> verdicts;
  std::optional<Partition> partition;
  Thresholds thresholds;

  json to_json() const {
    json j;
    j["mpc"] = mpc.mpc;
    json assign = json::array();
    for (auto a : mpc.assignment) assign.push_back(a + 1);
    j["assignment"] = assign;
    json nodes = json::array();
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      json n{{"node", i + 1},
             {"matched", mpc.assignment[i] + 1},
             {"abs_r", mpc.matched_r[i]},
             {"r2", r2[i]},
             {"scale", scale[i]}};
      n["rho"] = rho ? json((*rho)[i]) : json(nullptr);
      n["verdict"] = std::string(to_string(verdicts[i]));
      nodes.push_back(n);
    }
    j["nodes"] = nodes;
    j["adjacency"] = adjacency;
    j["true_adjacency"] = true_adjacency ? json(*true_adjacency) : json(nullptr);
    j["shd"] = shd ? json(*shd) : json(nullptr);
    j["partition"] = partition ? partition->to_json() : json(nullptr);
    j["thresholds"] = thresholds.to_json();
    return j;
  }

  /// node, r, R^2, rho, verdict
  std::string to_csv() const {
    std::ostringstream ss;
    ss << "node,r,r2,rho,verdict\n";
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      ss << i + 1 << ',' << io::format_double(mpc.matched_r[i]) << ',' << io::format_double(r2[i]) << ','
         << (rho ? io::format_double((*rho)[i]) : std::string()) << ',' << to_string(verdicts[i]) << '\n';
    }
    return ss.str();
  }
};

/// Scores estimated latents against ground truth. `pnl` adds Spearman columns
/// and admits the monotone verdict.
inline EvalReport evaluate_latents(const Tensor& z_true, const Tensor& z_est, bool pnl, const Thresholds& t) {
  EvalReport rep;
  rep.thresholds = t;
  rep.mpc = metrics::mpc(z_true, z_est);
  const std::size_t ell = z_true.cols();
  if (pnl) rep.rho = std::vector<double>(ell);
  for (std::size_t i = 0; i < ell; ++i) {
    const auto truth = z_true.column(i);
    const auto est = z_est.column(rep.mpc.assignment[i]);
    const auto fit = metrics::affine_fit(truth, est);
    rep.r2.push_back(fit.r2);
    rep.scale.push_back(fit.scale);
    std::optional<double> rho;
    if (pnl) {
      rho = metrics::rank_identifiability(truth, est);
      (*rep.rho)[i] = *rho;
    }
    rep.verdicts.push_back(classify(rep.mpc.matched_r[i], fit.r2, rho, t));
  }
  return rep;
}

inline EvalReport evaluate_model(const model::LanmModel& model, const data::Dataset& d, const Thresholds& t,
                                 std::optional<bool> pnl_override = std::nullopt) {
  const bool pnl = pnl_override.value_or(d.zbar.has_value());
  const Tensor z_est = model::posterior_means(model, d.x, d.one_hot());
  EvalReport rep = evaluate_latents(d.z, z_est, pnl, t);
  rep.adjacency = extract_adjacency(model, rep.mpc.assignment, t.mask_tau);
  if (d.spec) {
    rep.true_adjacency = d.spec->adjacency;
    rep.shd = metrics::shd(*rep.true_adjacency, rep.adjacency);
    rep.partition = partition_report(rep.verdicts, d.spec->violation_nodes);
  }
  return rep;
}

struct SeedSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline SeedSummary summarize(const std::vector<double>& v) {
  SeedSummary s;
  if (v.empty()) return s;
  s.mean = metrics::mean_of(v);
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  return s;
}

}  // namespace lanm::eval
