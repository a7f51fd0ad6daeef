// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lanm/error.hpp"

namespace lanm {

/// Dense row-major 2-D tensor of doubles.
class Tensor {
 public:
  using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  /// Builds from nested rows; rejects ragged or non-finite input.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<std::vector<double>> v;
    for (const auto& r : rows) v.emplace_back(r);
    return from_rows(v);
  }

  static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.front().size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged rows in tensor literal");
      for (double x : row) {
        if (!std::isfinite(x)) throw NumericError("non-finite entry in tensor literal");
        data.push_back(x);
      }
    }
    return Tensor(r, c, std::move(data));
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = data_[r * cols_ + c];
    return out;
  }

  void set_column(std::size_t c, std::span<const double> v) {
    if (v.size() != rows_) throw ShapeError("column length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) data_[r * cols_ + c] = v[r];
  }

  EigenMap map() { return EigenMap(data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)); }
  ConstEigenMap map() const {
    return ConstEigenMap(data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Rows `[begin, end)` copied into a new tensor.
inline Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  Tensor out(end - begin, t.cols());
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out(r - begin, c) = t(r, c);
  return out;
}

/// Rows picked by index.
inline Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  Tensor out(idx.size(), t.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(idx[i], c);
  return out;
}

}  // namespace lanm
