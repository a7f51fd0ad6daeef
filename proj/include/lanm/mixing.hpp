// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lanm/error.hpp"
#include "lanm/linalg.hpp"
#include "lanm/rng.hpp"
#include "lanm/tensor.hpp"

namespace lanm::mixing {

inline constexpr double kMaxCondition = 1e4;

/// Random square three-layer LeakyReLU network x = f(z), with an optional fixed
/// column-orthogonal embedding when the observation is wider than the latent.
struct MixingMlp {
  std::size_t ell = 0;
  std::size_t dim = 0;
  bool identity = false;
  double slope = 0.2;
  std::optional<Tensor> embed;  // ell x dim
  std::array<Tensor, 3> weights;
  std::array<double, 3> conditions{1.0, 1.0, 1.0};
  // Final whitening map x = (h - shift) * scale; empty means none.
  std::optional<Tensor> out_shift;  // 1 x dim
  std::optional<Tensor> out_scale;  // dim x dim, symmetric

  Tensor forward(const Tensor& z) const {
    if (z.cols() != ell) throw ShapeError("mixing: expected " + std::to_string(ell) + " latent columns");
    if (identity) return z;
    Tensor h = z;
    if (embed) {
      Tensor e(z.rows(), dim);
      e.map().noalias() = z.map() * embed->map();
      h = std::move(e);
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      Tensor next(h.rows(), dim);
      next.map().noalias() = h.map() * weights[k].map();
      if (k + 1 < weights.size()) {
        for (auto& v : next.values()) v = v > 0.0 ? v : slope * v;
      }
      h = std::move(next);
    }
    if (out_shift && out_scale) {
      for (std::size_t r = 0; r < h.rows(); ++r)
        for (std::size_t c = 0; c < dim; ++c) h(r, c) -= (*out_shift)[c];
      Tensor w(h.rows(), dim);
      w.map().noalias() = h.map() * out_scale->map();
      h = std::move(w);
    }
    return h;
  }

  /// Fixes the output affine map so that `f(z)` has zero mean and identity
  /// covariance. A per-column rescale leaves near-collinear outputs collinear;
  /// the symmetric inverse square root of the covariance does not. With an
  /// embedding (dim > ell) the output lives on an ell-manifold, so only the
  /// diagonal is used there.
  void standardize_on(const Tensor& z) {
    out_shift.reset();
    out_scale.reset();
    const Tensor h = forward(z);
    const auto n = static_cast<double>(h.rows());
    const Eigen::RowVectorXd mean = h.map().colwise().mean();
    const Eigen::MatrixXd centered = h.map().rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / n;
    if (dim > ell) cov = Eigen::MatrixXd(cov.diagonal().asDiagonal());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("mixing: covariance eigendecomposition failed");
    Eigen::VectorXd inv_sqrt = es.eigenvalues();
    for (Eigen::Index i = 0; i < inv_sqrt.size(); ++i) {
      if (!(inv_sqrt[i] > 1e-300)) throw NumericError("mixing: output covariance is singular");
      inv_sqrt[i] = 1.0 / std::sqrt(inv_sqrt[i]);
    }
    const Eigen::MatrixXd w = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
    Tensor shift(1, dim), scale(dim, dim);
    for (std::size_t c = 0; c < dim; ++c) shift[c] = mean[static_cast<Eigen::Index>(c)];
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < dim; ++c) scale(r, c) = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    out_shift = std::move(shift);
    out_scale = std::move(scale);
  }
};

inline MixingMlp identity_mixing(std::size_t ell) {
  MixingMlp m;
  m.ell = ell;
  m.dim = ell;
  m.identity = true;
  for (auto& w : m.weights) w = linalg::identity(ell);
  return m;
}

/// Weights are uniform in [-1, 1]; each layer is redrawn until its condition
/// number is below `max_condition`.
inline MixingMlp make_mixing(std::size_t ell, std::size_t dim, std::uint64_t seed, double slope = 0.2,
                             double max_condition = kMaxCondition) {
  if (ell == 0) throw ConfigError("mixing: ell must be >= 1");
  if (dim < ell) throw ConfigError("mixing: observed dimension must be >= ell");
  MixingMlp m;
  m.ell = ell;
  m.dim = dim;
  m.slope = slope;
  Rng rng(derive_seed(seed, "mixing"));
  if (dim > ell) {
    Eigen::MatrixXd g(dim, ell);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, ell);
    Tensor e(ell, dim);
    for (std::size_t r = 0; r < ell; ++r)
      for (std::size_t c = 0; c < dim; ++c) e(r, c) = q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
    m.embed = std::move(e);
  }
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw NumericError("mixing: could not draw a well-conditioned layer");
      Tensor w(dim, dim);
      for (auto& v : w.values()) v = rng.uniform(-1.0, 1.0);
      const double cond = linalg::condition_number(w);
      if (cond < max_condition) {
        m.weights[k] = std::move(w);
        m.conditions[k] = cond;
        break;
      }
    }
  }
  return m;
}

}  // namespace lanm::mixing
