#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fql::numkit {

/// Dense row-major 64-bit float tensor. Everything in this project is a
/// matrix (batch x dim), a row vector, or a scalar, so the shape vector
/// rarely has more than two entries.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size()) {
      throw std::invalid_argument("Tensor: shape does not match data length");
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }

  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    Tensor t({rows, cols});
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  static Tensor row(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const {
    if (shape_.size() < 2) return shape_.size() == 1 ? 1 : 0;
    return shape_[1];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  double item() const {
    if (size() != 1) throw std::logic_error("Tensor::item on non-scalar");
    return data_[0];
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

namespace detail {
using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EigenRowMat>;
using Map = Eigen::Map<EigenRowMat>;

inline MapConst as_eigen(const Tensor& t) {
  return MapConst(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
}  // namespace detail

/// C = A * B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  Tensor c = Tensor::zeros(a.rows(), b.cols());
  detail::Map(c.data(), a.rows(), b.cols()).noalias() =
      detail::as_eigen(a) * detail::as_eigen(b);
  return c;
}

/// C = A^T * B
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("matmul_tn: row counts disagree");
  }
  Tensor c = Tensor::zeros(a.cols(), b.cols());
  detail::Map(c.data(), a.cols(), b.cols()).noalias() =
      detail::as_eigen(a).transpose() * detail::as_eigen(b);
  return c;
}

/// C = A * B^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: column counts disagree");
  }
  Tensor c = Tensor::zeros(a.rows(), b.rows());
  detail::Map(c.data(), a.rows(), b.rows()).noalias() =
      detail::as_eigen(a) * detail::as_eigen(b).transpose();
  return c;
}

}  // namespace fql::numkit
