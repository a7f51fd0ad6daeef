// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanm/error.hpp"
#include "lanm/linalg.hpp"
#include "lanm/mixing.hpp"
#include "lanm/rng.hpp"
#include "lanm/scm.hpp"
#include "lanm/tensor.hpp"

namespace lanm::oracles {

using json = nlohmann::ordered_json;

inline constexpr double kInvertibleCondition = 1e8;
inline constexpr double kDefaultGradTol = 1e-6;
inline constexpr std::size_t kSubsetTries = 200;
inline constexpr std::size_t kGridPointsPerParent = 25;
inline constexpr std::size_t kRandomProbes = 2000;

struct AssumptionReport {
  std::string assumption;  // "ii", "iv" or "jacobian"
  bool pass = false;
  std::string reason;
  std::optional<std::size_t> node;  // 0-based, for per-node reports
  json witness = json::object();
  json tolerances = json::object();

  json to_json() const {
    json j;
    j["assumption"] = assumption;
    j["verdict"] = pass ? "PASS" : "FAIL";
    if (node) j["node"] = *node + 1;
    j["reason"] = reason;
    j["witness"] = witness;
    j["tolerances"] = tolerances;
    return j;
  }
};

/// Central-difference step used by every numeric derivative here.
inline double fd_step(double x) { return 1e-5 * std::max(1.0, std::fabs(x)); }

// --- assumption (ii): natural-parameter differences ---------------------------

inline double eta_matrix_condition(const Tensor& eta, std::span<const std::size_t> subset) {
  const std::size_t k = eta.cols();
  Tensor l(k, k);
  const std::size_t base = subset[0];
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < k; ++r) l(r, c) = eta(subset[c + 1], r) - eta(base, r);
  }
  return linalg::condition_number(l);
}

/// Searches (2l+1)-subsets of segments for an invertible difference matrix.
/// `eta` is segments x 2l. Segments are first put in a canonical order so the
/// verdict does not depend on how the caller numbered them.
inline AssumptionReport check_assumption_ii_eta(const Tensor& eta, std::uint64_t seed = 0x5eed) {
  AssumptionReport rep;
  rep.assumption = "ii";
  rep.tolerances = {{"max_condition", kInvertibleCondition}, {"subset_tries", kSubsetTries}};
  const std::size_t segments = eta.rows();
  const std::size_t need = eta.cols() + 1;
  rep.witness["segments_available"] = segments;
  if (segments < need) {
    rep.pass = false;
    rep.reason = "insufficient environments: need " + std::to_string(need) + ", have " + std::to_string(segments);
    return rep;
  }
  std::vector<std::size_t> order(segments);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = eta.row(a);
    const auto rb = eta.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_subset;
  auto consider = [&](const std::vector<std::size_t>& canon) {
    std::vector<std::size_t> subset;
    for (auto i : canon) subset.push_back(order[i]);
    const double cond = eta_matrix_condition(eta, subset);
    if (cond < best) {
      best = cond;
      best_subset = subset;
    }
  };

  // Exhaustive when small: every subset with every choice of base segment.
  double combos = 1.0;
  for (std::size_t i = 0; i < need; ++i) combos *= static_cast<double>(segments - i) / static_cast<double>(i + 1);
  if (combos * static_cast<double>(need) <= static_cast<double>(kSubsetTries)) {
    std::vector<bool> mask(segments, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(need), true);
    do {
      std::vector<std::size_t> chosen;
      for (std::size_t i = 0; i < segments; ++i)
        if (mask[i]) chosen.push_back(i);
      for (std::size_t b = 0; b < need; ++b) {
        std::vector<std::size_t> s{chosen[b]};
        for (std::size_t i = 0; i < need; ++i)
          if (i != b) s.push_back(chosen[i]);
        consider(s);
      }
    } while (std::prev_permutation(mask.begin(), mask.end()));
  } else {
    std::vector<std::size_t> first(need);
    std::iota(first.begin(), first.end(), std::size_t{0});
    consider(first);
    Rng rng(seed);
    for (std::size_t t = 1; t < kSubsetTries; ++t) {
      auto perm = rng.permutation(segments);
      perm.resize(need);
      consider(perm);
    }
  }
  rep.pass = best < kInvertibleCondition;
  rep.reason = rep.pass ? "difference matrix invertible" : "difference matrix numerically singular on every subset tried";
  rep.witness["condition_number"] = std::isfinite(best) ? json(best) : json("inf");
  json segs = json::array();
  for (auto s : best_subset) segs.push_back(s);
  rep.witness["segments"] = segs;
  return rep;
}

inline AssumptionReport check_assumption_ii(const scm::SegmentNoiseParams& params) {
  params.validate();
  return check_assumption_ii_eta(params.natural_params());
}

// --- assumption (iv): vanishing parent gradients ---------------------------------

/// g^u(z): segment index and a full latent row (only parent entries matter).
using Mechanism = std::function<double(std::size_t segment, std::span<const double> z)>;

/// Probe rows over the parents of one node; non-parent entries are zero.
inline std::vector<std::vector<double>> build_probe_grid(std::size_t ell, std::span<const std::size_t> parents,
                                                         const Tensor& samples, std::uint64_t seed = 7) {
  std::vector<std::pair<double, double>> ranges;
  for (auto p : parents) {
    auto col = samples.column(p);
    std::sort(col.begin(), col.end());
    auto pct = [&](double q) {
      const double pos = q * static_cast<double>(col.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, col.size() - 1);
      return col[lo] + (pos - static_cast<double>(lo)) * (col[hi] - col[lo]);
    };
    ranges.emplace_back(pct(0.01), pct(0.99));
  }
  std::vector<std::vector<double>> probes;
  if (parents.empty()) return probes;
  auto grid_value = [&](std::size_t k, std::size_t i) {
    const auto [lo, hi] = ranges[k];
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kGridPointsPerParent - 1);
  };
  if (parents.size() <= 2) {
    const std::size_t n2 = parents.size() == 2 ? kGridPointsPerParent : 1;
    for (std::size_t a = 0; a < kGridPointsPerParent; ++a) {
      for (std::size_t b = 0; b < n2; ++b) {
        std::vector<double> z(ell, 0.0);
        z[parents[0]] = grid_value(0, a);
        if (parents.size() == 2) z[parents[1]] = grid_value(1, b);
        probes.push_back(std::move(z));
      }
    }
  } else {
    Rng rng(seed);
    for (std::size_t t = 0; t < kRandomProbes; ++t) {
      std::vector<double> z(ell, 0.0);
      for (std::size_t k = 0; k < parents.size(); ++k) z[parents[k]] = rng.uniform(ranges[k].first, ranges[k].second);
      probes.push_back(std::move(z));
    }
  }
  return probes;
}

/// PASS iff some observed segment has every parent partial derivative within
/// `grad_tol` across all probes.
inline AssumptionReport check_mechanism_iv(const Mechanism& g, std::size_t segments,
                                           std::span<const std::size_t> parents,
                                           const std::vector<std::vector<double>>& probes,
                                           double grad_tol = kDefaultGradTol) {
  AssumptionReport rep;
  rep.assumption = "iv";
  rep.tolerances = {{"grad_tol", grad_tol}, {"probes", probes.size()}};
  rep.witness["scope"] = "observed segments only";
  if (parents.empty()) {
    rep.pass = true;
    rep.reason = "vacuous PASS (root)";
    return rep;
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_segment = 0;
  std::vector<double> work;
  for (std::size_t m = 0; m < segments; ++m) {
    double worst = 0.0;
    for (const auto& probe : probes) {
      work = probe;
      for (auto j : parents) {
        const double h = fd_step(probe[j]);
        work[j] = probe[j] + h;
        const double up = g(m, work);
        work[j] = probe[j] - h;
        const double down = g(m, work);
        work[j] = probe[j];
        worst = std::max(worst, std::fabs((up - down) / (2.0 * h)));
      }
      if (worst > best) break;
    }
    if (worst < best) {
      best = worst;
      best_segment = m;
    }
  }
  rep.pass = best <= grad_tol;
  rep.reason = rep.pass ? "parent gradients vanish in a witness segment"
                        : "no observed segment has vanishing parent gradients";
  rep.witness["segment"] = best_segment;
  rep.witness["max_parent_gradient"] = best;
  return rep;
}

/// Assumption (iv) for one node of a generated SCM, including any violation term.
inline AssumptionReport check_assumption_iv(const scm::ScmSpec& spec, const scm::EdgeCoeffs& coeffs,
                                            std::size_t node, const std::vector<std::vector<double>>& probes,
                                            double grad_tol = kDefaultGradTol) {
  const auto parents = spec.effective_parents(node);
  Mechanism g = [&](std::size_t m, std::span<const double> z) {
    return scm::composed_mechanism(spec, coeffs, m, node, z);
  };
  auto rep = check_mechanism_iv(g, coeffs.segments, parents, probes, grad_tol);
  rep.node = node;
  return rep;
}

/// Convenience: probes from raw latent samples, then the check.
inline AssumptionReport check_assumption_iv(const scm::ScmSpec& spec, const scm::EdgeCoeffs& coeffs,
                                            std::size_t node, const Tensor& raw_latents,
                                            double grad_tol = kDefaultGradTol) {
  const auto parents = spec.effective_parents(node);
  const auto probes = build_probe_grid(spec.ell, parents, raw_latents);
  return check_assumption_iv(spec, coeffs, node, probes, grad_tol);
}

// --- unit-triangular Jacobian of the noise-to-latent map -----------------------

struct JacobianReport {
  bool pass = false;
  std::size_t points = 0;
  double max_upper = 0.0;
  double max_diag_error = 0.0;
  double max_det_error = 0.0;

  json to_json() const {
    return {{"assumption", "jacobian"},
            {"verdict", pass ? "PASS" : "FAIL"},
            {"points", points},
            {"max_upper_abs", max_upper},
            {"max_diag_error", max_diag_error},
            {"max_det_error", max_det_error},
            {"tolerance", 1e-6}};
  }
};

/// z = h^u(n) for one row, with the violation rule applied.
inline std::vector<double> noise_to_latent(const scm::ScmSpec& spec, const scm::EdgeCoeffs& coeffs,
                                           std::size_t segment, std::span<const double> n) {
  std::vector<double> z(spec.ell);
  for (std::size_t i = 0; i < spec.ell; ++i) z[i] = scm::mechanism(spec, coeffs, segment, i, z) + n[i];
  std::vector<double> out = z;
  for (auto v : spec.violation_nodes) out[v] = z[v] + z[v - 1];
  return out;
}

inline Tensor latent_jacobian(const scm::ScmSpec& spec, const scm::EdgeCoeffs& coeffs, std::size_t segment,
                              std::span<const double> n) {
  const std::size_t ell = spec.ell;
  Tensor jac(ell, ell);
  std::vector<double> work(n.begin(), n.end());
  for (std::size_t k = 0; k < ell; ++k) {
    const double h = fd_step(n[k]);
    work[k] = n[k] + h;
    const auto up = noise_to_latent(spec, coeffs, segment, work);
    work[k] = n[k] - h;
    const auto down = noise_to_latent(spec, coeffs, segment, work);
    work[k] = n[k];
    for (std::size_t i = 0; i < ell; ++i) jac(i, k) = (up[i] - down[i]) / (2.0 * h);
  }
  return jac;
}

/// Finite-difference dz/dn at each row of `points` must be lower triangular with a unit diagonal.
inline JacobianReport check_unit_triangular_jacobian(const scm::ScmSpec& spec, const scm::EdgeCoeffs& coeffs,
                                                     std::size_t segment, const Tensor& points,
                                                     double tol = 1e-6) {
  if (spec.distortions) throw DomainError("PNL not unit-triangular: distorted latents are not additive in n");
  if (points.cols() != spec.ell) throw ShapeError("jacobian check: points must have ell columns");
  JacobianReport rep;
  rep.points = points.rows();
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const Tensor jac = latent_jacobian(spec, coeffs, segment, points.row(r));
    for (std::size_t i = 0; i < spec.ell; ++i) {
      for (std::size_t k = i + 1; k < spec.ell; ++k) rep.max_upper = std::max(rep.max_upper, std::fabs(jac(i, k)));
      rep.max_diag_error = std::max(rep.max_diag_error, std::fabs(jac(i, i) - 1.0));
    }
    rep.max_det_error = std::max(rep.max_det_error, std::fabs(linalg::determinant(jac) - 1.0));
  }
  rep.pass = rep.max_upper < tol && rep.max_diag_error < tol && rep.max_det_error < tol;
  return rep;
}

// --- observationally equivalent counterexample ----------------------------------

/// x = f(z1, z2) with z2 = A^u(z1) + B(z1) + n2, against the rewrite
/// z2' = A^u(z1) + n2 observed through f o f1, f1(z1, z2') = (z1, z2' + B(z1)).
struct CounterexampleParts {
  std::function<double(std::size_t, double)> varying;  // A^u
  std::function<double(double)> invariant;             // B
  std::function<std::array<double, 2>(std::array<double, 2>)> mixing;
};

struct CounterexamplePair {
  Tensor n;                         // probes x 2
  std::vector<std::size_t> labels;
  Tensor z;                         // (z1, z2)
  Tensor z_alt;                     // (z1, z2')
  Tensor x;
  Tensor x_alt;
  double max_abs_diff = 0.0;
  double corr_z2 = 0.0;

  json to_json() const {
    return {{"probes", x.rows()}, {"max_abs_x_diff", max_abs_diff}, {"corr_z2_z2prime", corr_z2}};
  }
};

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline CounterexamplePair evaluate_counterexample(const CounterexampleParts& parts, const Tensor& n,
                                                  std::span<const std::size_t> labels) {
  CounterexamplePair p;
  p.n = n;
  p.labels.assign(labels.begin(), labels.end());
  const std::size_t rows = n.rows();
  p.z = Tensor(rows, 2);
  p.z_alt = Tensor(rows, 2);
  p.x = Tensor(rows, 2);
  p.x_alt = Tensor(rows, 2);
  for (std::size_t r = 0; r < rows; ++r) {
    const double z1 = n(r, 0);
    const double a = parts.varying(labels[r], z1);
    const double b = parts.invariant(z1);
    const double z2 = a + b + n(r, 1);
    const double z2_alt = a + n(r, 1);
    p.z(r, 0) = z1;
    p.z(r, 1) = z2;
    p.z_alt(r, 0) = z1;
    p.z_alt(r, 1) = z2_alt;
    const auto x = parts.mixing({z1, z2});
    const auto f1 = std::array<double, 2>{z1, z2_alt + b};
    const auto x_alt = parts.mixing(f1);
    for (std::size_t c = 0; c < 2; ++c) {
      p.x(r, c) = x[c];
      p.x_alt(r, c) = x_alt[c];
      p.max_abs_diff = std::max(p.max_abs_diff, std::fabs(x[c] - x_alt[c]));
    }
  }
  p.corr_z2 = pearson(p.z.column(1), p.z_alt.column(1));
  return p;
}

/// Random instance: 10 segments x 1000 probes, tanh networks for A^u and B, and a
/// random square mixing. With `invariant_constant` B is a constant shift.
inline CounterexamplePair build_counterexample(std::uint64_t seed, bool invariant_constant = false,
                                               std::size_t segments = 10, std::size_t per_segment = 1000) {
  constexpr std::size_t kHidden = 8;
  Rng rng(derive_seed(seed, "counterexample"));
  // A^u: shared hidden layer, segment-specific output weights.
  std::vector<double> w1(kHidden), b1(kHidden);
  for (std::size_t k = 0; k < kHidden; ++k) {
    w1[k] = rng.uniform(-1.5, 1.5);
    b1[k] = rng.uniform(-1.0, 1.0);
  }
  Tensor out1(segments, kHidden);
  for (auto& v : out1.values()) v = rng.uniform(-1.0, 1.0);
  // B: its own hidden layer with a larger output scale so the invariant part matters.
  std::vector<double> w2(kHidden), b2(kHidden), out2(kHidden);
  for (std::size_t k = 0; k < kHidden; ++k) {
    w2[k] = rng.uniform(-1.5, 1.5);
    b2[k] = rng.uniform(-1.0, 1.0);
    out2[k] = rng.uniform(-2.0, 2.0);
  }
  const double shift = rng.uniform(-1.0, 1.0);
  const auto mix = mixing::make_mixing(2, 2, derive_seed(seed, "counterexample-mixing"));

  CounterexampleParts parts;
  parts.varying = [=](std::size_t u, double z1) {
    double s = 0.0;
    for (std::size_t k = 0; k < kHidden; ++k) s += out1(u, k) * std::tanh(w1[k] * z1 + b1[k]);
    return s;
  };
  if (invariant_constant) {
    parts.invariant = [=](double) { return shift; };
  } else {
    parts.invariant = [=](double z1) {
      double s = 0.0;
      for (std::size_t k = 0; k < kHidden; ++k) s += out2[k] * std::tanh(w2[k] * z1 + b2[k]);
      return s + 1.5 * z1;
    };
  }
  parts.mixing = [mix](std::array<double, 2> z) {
    Tensor t(1, 2, std::vector<double>{z[0], z[1]});
    const Tensor x = mix.forward(t);
    return std::array<double, 2>{x[0], x[1]};
  };

  const auto params = scm::sample_segment_params(2, segments, derive_seed(seed, "counterexample-noise"));
  const auto noise = scm::sample_noise(params, per_segment, derive_seed(seed, "counterexample-draws"));
  return evaluate_counterexample(parts, noise.n, noise.labels);
}

}  // namespace lanm::oracles
