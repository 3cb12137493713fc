// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlasdi/error.hpp"

namespace mlasdi {

/// Row-major float64 matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      fail(ErrorKind::shape, "matrix data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
    }
  }

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) fail(ErrorKind::shape, "ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::string shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Dense rank-3 float64 tensor stored as [i][j][k], k fastest.
///
/// Used for snapshot fields (param, time, state) and latent trajectories
/// (param, time, latent).
class Tensor3 {
 public:
  Tensor3() = default;

  Tensor3(std::size_t n0, std::size_t n1, std::size_t n2, double fill = 0.0)
      : n0_(n0), n1_(n1), n2_(n2), data_(n0 * n1 * n2, fill) {}

  Tensor3(std::size_t n0, std::size_t n1, std::size_t n2, std::vector<double> data)
      : n0_(n0), n1_(n1), n2_(n2), data_(std::move(data)) {
    if (data_.size() != n0_ * n1_ * n2_) {
      fail(ErrorKind::shape, "tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
    }
  }

  std::size_t dim0() const noexcept { return n0_; }
  std::size_t dim1() const noexcept { return n1_; }
  std::size_t dim2() const noexcept { return n2_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[(i * n1_ + j) * n2_ + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * n1_ + j) * n2_ + k];
  }

  /// Contiguous [j][k] block for a fixed first index.
  std::span<double> slab(std::size_t i) noexcept { return {data_.data() + i * n1_ * n2_, n1_ * n2_}; }
  std::span<const double> slab(std::size_t i) const noexcept {
    return {data_.data() + i * n1_ * n2_, n1_ * n2_};
  }

  DenseMatrix slab_matrix(std::size_t i) const {
    auto s = slab(i);
    return DenseMatrix(n1_, n2_, std::vector<double>(s.begin(), s.end()));
  }

  void set_slab(std::size_t i, const DenseMatrix& m) {
    if (m.rows() != n1_ || m.cols() != n2_) {
      fail(ErrorKind::shape, "slab " + m.shape_string() + " does not fit tensor " + shape_string());
    }
    auto dst = slab(i);
    auto src = m.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }

  /// All entries viewed as a (dim0*dim1) x dim2 matrix (copy).
  DenseMatrix flattened() const { return DenseMatrix(n0_ * n1_, n2_, data_); }

  static Tensor3 from_flattened(std::size_t n0, std::size_t n1, const DenseMatrix& m) {
    if (m.rows() != n0 * n1) {
      fail(ErrorKind::shape, "cannot reshape " + m.shape_string() + " into leading dims " +
                                 std::to_string(n0) + "x" + std::to_string(n1));
    }
    return Tensor3(n0, n1, m.cols(), m.storage());
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::string shape_string() const {
    return "(" + std::to_string(n0_) + "x" + std::to_string(n1_) + "x" + std::to_string(n2_) + ")";
  }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t n0_ = 0;
  std::size_t n1_ = 0;
  std::size_t n2_ = 0;
  std::vector<double> data_;
};

}  // namespace mlasdi
