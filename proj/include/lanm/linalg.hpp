// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "lanm/tensor.hpp"

namespace lanm::linalg {

/// Ratio of extreme singular values; infinity for a singular matrix.
inline double condition_number(const Tensor& a) {
  if (a.empty()) return std::numeric_limits<double>::infinity();
  Eigen::MatrixXd m = a.map();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

inline double determinant(const Tensor& a) {
  Eigen::MatrixXd m = a.map();
  return m.determinant();
}

inline Tensor identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

}  // namespace lanm::linalg
