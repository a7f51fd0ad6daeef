// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lanm/error.hpp"
#include "lanm/rng.hpp"
#include "lanm/tensor.hpp"

namespace lanm::scm {

/// Parent transform phi applied inside g_i^u(pa_i) = sum_j lambda_{j,i}(u) phi(z_j).
enum class Equation { root, linear, sin, cos, log_square, exp_sin_square };

/// Component-wise strictly monotone distortion of a post-nonlinear model.
enum class Distortion { identity, cube, tanh_linear, exp };

inline constexpr double kLogSquareGuard = 1e-8;

inline std::string_view to_string(Equation e) {
  switch (e) {
    case Equation::root: return "root";
    case Equation::linear: return "linear";
    case Equation::sin: return "sin";
    case Equation::cos: return "cos";
    case Equation::log_square: return "log_square";
    case Equation::exp_sin_square: return "exp_sin_square";
  }
  return "?";
}

inline Equation parse_equation(std::string_view s) {
  for (auto e : {Equation::root, Equation::linear, Equation::sin, Equation::cos, Equation::log_square,
                 Equation::exp_sin_square}) {
    if (s == to_string(e)) return e;
  }
  throw ConfigError("unknown equation tag '" + std::string(s) + "'");
}

inline std::string_view to_string(Distortion d) {
  switch (d) {
    case Distortion::identity: return "identity";
    case Distortion::cube: return "cube";
    case Distortion::tanh_linear: return "tanh_linear";
    case Distortion::exp: return "exp";
  }
  return "?";
}

inline Distortion parse_distortion(std::string_view s) {
  for (auto d : {Distortion::identity, Distortion::cube, Distortion::tanh_linear, Distortion::exp}) {
    if (s == to_string(d)) return d;
  }
  if (s == "square" || s == "abs" || s == "sin" || s == "cos") {
    throw ConfigError("distortion '" + std::string(s) + "' is not monotone and therefore not invertible");
  }
  throw ConfigError("unknown distortion tag '" + std::string(s) + "'");
}

inline double apply_equation(Equation e, double x) {
  switch (e) {
    case Equation::root: return 0.0;
    case Equation::linear: return x;
    case Equation::sin: return std::sin(x);
    case Equation::cos: return std::cos(x);
    case Equation::log_square: return std::log(x * x + kLogSquareGuard);
    case Equation::exp_sin_square: return std::exp(std::sin(x * x));
  }
  return 0.0;
}

inline double distort(Distortion d, double z) {
  switch (d) {
    case Distortion::identity: return z;
    case Distortion::cube: return z * z * z;
    case Distortion::tanh_linear: return 2.0 * std::tanh(z) + 0.2 * z;
    case Distortion::exp: return std::exp(z);
  }
  return z;
}

/// Inverse of `distort`. tanh_linear has no closed form and is solved by bisection.
inline double undistort(Distortion d, double y) {
  switch (d) {
    case Distortion::identity: return y;
    case Distortion::cube: return std::cbrt(y);
    case Distortion::exp:
      if (!(y > 0.0)) throw DomainError("exp distortion inverse needs a positive value");
      return std::log(y);
    case Distortion::tanh_linear: {
      // |2 tanh z| < 2 so the root lies within (y - 2, y + 2) / 0.2.
      double lo = (y - 2.0) / 0.2;
      double hi = (y + 2.0) / 0.2;
      for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (distort(d, mid) < y) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
  }
  return y;
}

/// Ground-truth latent SCM. Nodes are 0-based in code; adjacency(child, parent) = 1
/// encodes parent -> child, so a valid spec is strictly lower triangular.
struct ScmSpec {
  std::size_t ell = 0;
  std::vector<std::vector<int>> adjacency;
  std::vector<Equation> equations;
  std::pair<double, double> lambda_range{0.1, 2.0};
  std::vector<std::size_t> violation_nodes;
  std::optional<std::vector<Distortion>> distortions;

  std::vector<std::size_t> parents(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < ell; ++j)
      if (adjacency[i][j] != 0) out.push_back(j);
    return out;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& row : adjacency)
      for (int v : row) n += v != 0;
    return n;
  }

  bool is_violated(std::size_t i) const {
    return std::find(violation_nodes.begin(), violation_nodes.end(), i) != violation_nodes.end();
  }

  /// Parents of the composed mechanism; a violated node also depends on its predecessor.
  std::vector<std::size_t> effective_parents(std::size_t i) const {
    auto p = parents(i);
    if (is_violated(i) && std::find(p.begin(), p.end(), i - 1) == p.end()) {
      p.push_back(i - 1);
      std::sort(p.begin(), p.end());
    }
    return p;
  }

  void validate() const {
    if (ell == 0) throw ConfigError("scm: ell must be >= 1");
    if (adjacency.size() != ell) throw ConfigError("scm: adjacency must have ell rows");
    for (std::size_t i = 0; i < ell; ++i) {
      if (adjacency[i].size() != ell) throw ConfigError("scm: adjacency must be square");
      for (std::size_t j = 0; j < ell; ++j) {
        const int v = adjacency[i][j];
        if (v != 0 && v != 1) throw ConfigError("scm: adjacency entries must be 0 or 1");
        if (v == 1 && j >= i) {
          throw ConfigError("scm: adjacency must be strictly lower triangular (edge " + std::to_string(j + 1) +
                            "->" + std::to_string(i + 1) + " breaks the causal order)");
        }
      }
    }
    if (equations.size() != ell) throw ConfigError("scm: need one equation tag per node");
    for (std::size_t i = 0; i < ell; ++i) {
      const bool has_parents = !parents(i).empty();
      if (has_parents && equations[i] == Equation::root) {
        throw ConfigError("scm: node " + std::to_string(i + 1) + " has parents but a root equation");
      }
      if (!has_parents && equations[i] != Equation::root) {
        throw ConfigError("scm: node " + std::to_string(i + 1) + " has no parents and must use 'root'");
      }
    }
    if (!(lambda_range.first > 0.0 && lambda_range.first <= lambda_range.second)) {
      throw ConfigError("scm: lambda range must satisfy 0 < lo <= hi");
    }
    std::set<std::size_t> seen;
    for (auto v : violation_nodes) {
      if (v == 0 || v >= ell) {
        throw ConfigError("scm: violation node " + std::to_string(v + 1) + " must lie in 2.." + std::to_string(ell));
      }
      if (parents(v).empty()) throw ConfigError("scm: violation node " + std::to_string(v + 1) + " has no parent");
      if (!seen.insert(v).second) throw ConfigError("scm: duplicate violation node");
    }
    if (distortions && distortions->size() != ell) throw ConfigError("scm: need one distortion tag per node");
  }
};

/// The synthetic chain: z1 = n1, z2 = l sin z1, z3 = l cos z2, z4 = l log z3^2,
/// z5 = l exp(sin z3^2). Nodes beyond five continue with sin/cos of the predecessor.
inline ScmSpec synthetic_chain(std::size_t ell) {
  ScmSpec s;
  s.ell = ell;
  s.adjacency.assign(ell, std::vector<int>(ell, 0));
  s.equations.assign(ell, Equation::root);
  auto edge = [&](std::size_t parent, std::size_t child, Equation e) {
    if (child < ell) {
      s.adjacency[child][parent] = 1;
      s.equations[child] = e;
    }
  };
  edge(0, 1, Equation::sin);
  edge(1, 2, Equation::cos);
  edge(2, 3, Equation::log_square);
  edge(2, 4, Equation::exp_sin_square);
  for (std::size_t i = 5; i < ell; ++i) edge(i - 1, i, (i % 2 == 1) ? Equation::sin : Equation::cos);
  return s;
}

/// Per-segment Gaussian noise: alpha is the mean, beta the variance.
struct SegmentNoiseParams {
  std::size_t segments = 0;
  std::size_t ell = 0;
  Tensor alpha;  // segments x ell
  Tensor beta;   // segments x ell

  /// Natural parameters, segments x 2*ell, laid out (a/b, -1/(2b)) per node.
  Tensor natural_params() const {
    Tensor eta(segments, 2 * ell);
    for (std::size_t m = 0; m < segments; ++m) {
      for (std::size_t i = 0; i < ell; ++i) {
        eta(m, 2 * i) = alpha(m, i) / beta(m, i);
        eta(m, 2 * i + 1) = -1.0 / (2.0 * beta(m, i));
      }
    }
    return eta;
  }

  void validate() const {
    if (segments == 0) throw ConfigError("noise: need at least one segment");
    if (alpha.rows() != segments || beta.rows() != segments || alpha.cols() != ell || beta.cols() != ell) {
      throw ShapeError("noise: parameter tables must be segments x ell");
    }
    for (double b : beta.values())
      if (!(b > 0.0)) throw DomainError("noise: variance must be positive");
  }
};

struct NoiseRanges {
  std::pair<double, double> alpha{-2.0, 2.0};
  std::pair<double, double> beta{0.1, 3.0};
};

inline SegmentNoiseParams sample_segment_params(std::size_t ell, std::size_t segments, std::uint64_t seed,
                                                const NoiseRanges& ranges = {}) {
  if (ell == 0 || segments == 0) throw ConfigError("sample_segment_params: ell and segments must be >= 1");
  SegmentNoiseParams p{segments, ell, Tensor(segments, ell), Tensor(segments, ell)};
  Rng rng(derive_seed(seed, "segment-params"));
  for (std::size_t m = 0; m < segments; ++m) {
    for (std::size_t i = 0; i < ell; ++i) {
      p.alpha(m, i) = rng.uniform(ranges.alpha.first, ranges.alpha.second);
      p.beta(m, i) = rng.uniform(ranges.beta.first, ranges.beta.second);
    }
  }
  return p;
}

struct NoiseSample {
  Tensor n;                         // rows x ell
  std::vector<std::size_t> labels;  // segment per row
};

/// Rows are ordered by segment, then by draw. Each segment uses its own derived
/// stream so the output does not depend on generation order.
inline NoiseSample sample_noise(const SegmentNoiseParams& params, std::size_t per_segment, std::uint64_t seed) {
  if (per_segment == 0) throw ConfigError("sample_noise: samples per segment must be >= 1");
  params.validate();
  NoiseSample out{Tensor(params.segments * per_segment, params.ell), {}};
  out.labels.reserve(params.segments * per_segment);
  for (std::size_t m = 0; m < params.segments; ++m) {
    Rng rng(derive_seed(seed, "noise", m));
    for (std::size_t k = 0; k < per_segment; ++k) {
      const std::size_t row = m * per_segment + k;
      for (std::size_t i = 0; i < params.ell; ++i) {
        out.n(row, i) = rng.normal(params.alpha(m, i), std::sqrt(params.beta(m, i)));
      }
      out.labels.push_back(m);
    }
  }
  return out;
}

/// lambda_{j,i}(u), piecewise constant over segments.
struct EdgeCoeffs {
  std::size_t segments = 0;
  std::size_t ell = 0;
  Tensor table;  // segments x (ell*ell), entry [m, child*ell + parent]

  double operator()(std::size_t segment, std::size_t child, std::size_t parent) const {
    return table(segment, child * ell + parent);
  }
  double& at(std::size_t segment, std::size_t child, std::size_t parent) {
    return table(segment, child * ell + parent);
  }
};

inline EdgeCoeffs sample_edge_coeffs(const ScmSpec& spec, std::size_t segments, std::uint64_t seed) {
  EdgeCoeffs c{segments, spec.ell, Tensor(segments, spec.ell * spec.ell)};
  Rng rng(derive_seed(seed, "edge-coeffs"));
  const auto [lo, hi] = spec.lambda_range;
  for (std::size_t m = 0; m < segments; ++m) {
    for (std::size_t i = 0; i < spec.ell; ++i) {
      for (std::size_t j : spec.parents(i)) {
        const double mag = rng.uniform(lo, hi);
        c.at(m, i, j) = rng.coin() ? mag : -mag;
      }
    }
  }
  return c;
}

/// Appends a segment in which every edge coefficient is zero, so each node's
/// mechanism has vanishing parent gradients there.
inline EdgeCoeffs with_certification_segment(const EdgeCoeffs& c) {
  EdgeCoeffs out{c.segments + 1, c.ell, Tensor(c.segments + 1, c.ell * c.ell)};
  for (std::size_t m = 0; m < c.segments; ++m)
    for (std::size_t k = 0; k < c.table.cols(); ++k) out.table(m, k) = c.table(m, k);
  return out;
}

/// g_i^u evaluated on a full latent row `z` (only parent entries are read).
inline double mechanism(const ScmSpec& spec, const EdgeCoeffs& coeffs, std::size_t segment, std::size_t node,
                        std::span<const double> z) {
  double g = 0.0;
  for (std::size_t j = 0; j < spec.ell; ++j) {
    if (spec.adjacency[node][j] != 0) g += coeffs(segment, node, j) * apply_equation(spec.equations[node], z[j]);
  }
  return g;
}

/// Composed mechanism including the u-invariant predecessor term of a violated node.
inline double composed_mechanism(const ScmSpec& spec, const EdgeCoeffs& coeffs, std::size_t segment,
                                 std::size_t node, std::span<const double> z) {
  double g = mechanism(spec, coeffs, segment, node, z);
  if (spec.is_violated(node)) g += z[node - 1];
  return g;
}

/// Solves the SCM in topological order for every row.
inline Tensor gen_latents(const ScmSpec& spec, const Tensor& n, std::span<const std::size_t> labels,
                          const EdgeCoeffs& coeffs) {
  if (n.rows() != labels.size()) throw ShapeError("gen_latents: noise and labels are not row aligned");
  if (n.cols() != spec.ell) throw ShapeError("gen_latents: noise has wrong width");
  Tensor z(n.rows(), spec.ell);
  for (std::size_t r = 0; r < n.rows(); ++r) {
    if (labels[r] >= coeffs.segments) throw DomainError("gen_latents: segment label out of range");
    auto zr = z.row(r);
    for (std::size_t i = 0; i < spec.ell; ++i) {
      zr[i] = mechanism(spec, coeffs, labels[r], i, zr) + n(r, i);
    }
  }
  return z;
}

/// z_i <- z_i + z_{i-1} for every violation node, using the unmodified predecessor.
inline Tensor apply_violation(const ScmSpec& spec, const Tensor& z) {
  Tensor out = z;
  for (std::size_t v : spec.violation_nodes) {
    if (v == 0) throw DomainError("apply_violation: node 1 has no predecessor");
    if (v >= spec.ell) throw DomainError("apply_violation: node index out of range");
    for (std::size_t r = 0; r < z.rows(); ++r) out(r, v) = z(r, v) + z(r, v - 1);
  }
  return out;
}

inline Tensor apply_pnl(const ScmSpec& spec, const Tensor& z) {
  if (!spec.distortions) throw ConfigError("apply_pnl: no distortions configured");
  Tensor out = z;
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t i = 0; i < spec.ell; ++i) out(r, i) = distort((*spec.distortions)[i], z(r, i));
  return out;
}

inline Tensor invert_pnl(const ScmSpec& spec, const Tensor& zbar) {
  if (!spec.distortions) throw ConfigError("invert_pnl: no distortions configured");
  Tensor out = zbar;
  for (std::size_t r = 0; r < zbar.rows(); ++r)
    for (std::size_t i = 0; i < spec.ell; ++i) out(r, i) = undistort((*spec.distortions)[i], zbar(r, i));
  return out;
}

}  // namespace lanm::scm
