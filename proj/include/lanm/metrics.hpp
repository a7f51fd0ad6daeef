// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lanm/error.hpp"
#include "lanm/tensor.hpp"

namespace lanm::metrics {

using Adjacency = std::vector<std::vector<int>>;

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

/// Pearson correlation; throws when either column is constant.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  if (a.size() < 3) throw DomainError("pearson: need at least 3 samples");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DomainError("pearson: constant column");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Maximum-weight perfect matching on a square score matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns assignment[row] = column.
inline std::vector<std::size_t> hungarian_max(const Tensor& score) {
  const std::size_t n = score.rows();
  if (score.cols() != n) throw ShapeError("hungarian: score matrix must be square");
  if (n == 0) return {};
  double top = -std::numeric_limits<double>::infinity();
  for (double v : score.values()) top = std::max(top, v);
  // 1-based arrays; cost = top - score turns maximization into minimization.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (top - score(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

inline double assignment_score(const Tensor& score, std::span<const std::size_t> assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) s += score(i, assignment[i]);
  return s;
}

struct MpcResult {
  double mpc = 0.0;
  std::vector<std::size_t> assignment;  // true node -> estimated node
  std::vector<double> matched_r;        // |r| per true node
  Tensor abs_corr;                      // true x estimated
};

/// Mean of matched absolute Pearson correlations under the optimal bijection.
inline MpcResult mpc(const Tensor& z_true, const Tensor& z_est) {
  if (z_true.rows() != z_est.rows() || z_true.cols() != z_est.cols()) {
    throw ShapeError("mpc: shapes " + z_true.shape_string() + " and " + z_est.shape_string() + " differ");
  }
  if (z_true.rows() < 3) throw DomainError("mpc: need at least 3 rows");
  const std::size_t ell = z_true.cols();
  std::vector<std::vector<double>> tc, ec;
  for (std::size_t i = 0; i < ell; ++i) {
    tc.push_back(z_true.column(i));
    ec.push_back(z_est.column(i));
    if (!(variance_of(tc.back()) > 0.0)) throw DomainError("mpc: true column " + std::to_string(i + 1) + " is constant");
    if (!(variance_of(ec.back()) > 0.0)) {
      throw DomainError("mpc: estimated column " + std::to_string(i + 1) + " is constant");
    }
  }
  MpcResult r;
  r.abs_corr = Tensor(ell, ell);
  for (std::size_t i = 0; i < ell; ++i)
    for (std::size_t j = 0; j < ell; ++j) r.abs_corr(i, j) = std::fabs(pearson(tc[i], ec[j]));
  r.assignment = hungarian_max(r.abs_corr);
  for (std::size_t i = 0; i < ell; ++i) r.matched_r.push_back(r.abs_corr(i, r.assignment[i]));
  r.mpc = mean_of(r.matched_r);
  return r;
}

inline void check_adjacency(const Adjacency& a, const char* what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != a.size()) throw ShapeError(std::string(what) + ": adjacency must be square");
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (a[i][j] != 0 && a[i][j] != 1) throw DomainError(std::string(what) + ": adjacency entries must be 0 or 1");
    }
    if (a[i][i] != 0) throw DomainError(std::string(what) + ": adjacency diagonal must be zero");
  }
}

/// Structural Hamming distance: one per unordered pair whose edge state differs
/// (addition, deletion, or reversal).
inline std::size_t shd(const Adjacency& a, const Adjacency& b) {
  check_adjacency(a, "shd");
  check_adjacency(b, "shd");
  if (a.size() != b.size()) throw ShapeError("shd: adjacency sizes differ");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) d += (a[i][j] != b[i][j] || a[j][i] != b[j][i]) ? 1 : 0;
  return d;
}

struct AffineFit {
  double scale = 0.0;
  double offset = 0.0;
  double r2 = 0.0;
};

/// Least squares z_true ~ scale * z_est + offset.
inline AffineFit affine_fit(std::span<const double> z_true, std::span<const double> z_est) {
  if (z_true.size() != z_est.size()) throw ShapeError("affine_fit: length mismatch");
  if (z_true.size() < 3) throw DomainError("affine_fit: need at least 3 samples");
  const double mt = mean_of(z_true);
  const double me = mean_of(z_est);
  double see = 0.0, ste = 0.0, stt = 0.0;
  for (std::size_t i = 0; i < z_true.size(); ++i) {
    see += (z_est[i] - me) * (z_est[i] - me);
    ste += (z_true[i] - mt) * (z_est[i] - me);
    stt += (z_true[i] - mt) * (z_true[i] - mt);
  }
  if (!(see > 0.0) || !(stt > 0.0)) throw DomainError("affine_fit: degenerate variance");
  AffineFit f;
  f.scale = ste / see;
  f.offset = mt - f.scale * me;
  double ssr = 0.0;
  for (std::size_t i = 0; i < z_true.size(); ++i) {
    const double res = z_true[i] - (f.scale * z_est[i] + f.offset);
    ssr += res * res;
  }
  f.r2 = 1.0 - ssr / stt;
  return f;
}

/// Ranks starting at 1; ties get their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

/// |Spearman rho|: component-wise monotone recovery score.
inline double rank_identifiability(std::span<const double> z_true, std::span<const double> z_est) {
  return std::fabs(spearman(z_true, z_est));
}

}  // namespace lanm::metrics
