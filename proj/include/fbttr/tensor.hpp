#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fbttr/errors.hpp"

namespace fbttr {

using Extents = std::vector<std::size_t>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kMaxOrder = 8;

std::size_t product(std::span<const std::size_t> extents);

// Dense N-way array of doubles. Storage is first-index-slowest (row-major
// generalised), so an order-2 tensor is a row-major matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Extents shape);  // zero-filled
  Tensor(Extents shape, std::vector<double> data);

  static Tensor from_matrix(const Matrix& m);

  const Extents& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t extent(std::size_t mode) const;  // 1-based
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double& operator()(std::span<const std::size_t> index);
  double operator()(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  // Order-2 only.
  Matrix to_matrix() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::span<const std::size_t> index) const;

  Extents shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor t);

// Mode-n unfolding. Rows index mode `mode`; columns enumerate the remaining
// modes in increasing mode order with the earliest remaining mode varying
// fastest.
Matrix unfold(const Tensor& t, std::size_t mode);
Tensor fold(const Matrix& m, std::size_t mode, const Extents& shape);

// t x_mode m, with cols(m) == extent(mode).
Tensor mode_n_product(const Tensor& t, const Matrix& m, std::size_t mode);

// Applies every factor, keyed by 1-based mode, in increasing mode order.
Tensor multilinear_product(const Tensor& t, const std::map<std::size_t, Matrix>& factors);

Matrix kronecker(const Matrix& a, const Matrix& b);

// P_N (x) ... (x) P_first for factors ordered by increasing mode. Pairs with
// the unfolding column convention: unfold(G x_2 P_2 ... x_N P_N, 1) equals
// unfold(G, 1) * reverse_kronecker({P_2..P_N})^T.
Matrix reverse_kronecker(std::span<const Matrix> factors);

double frobenius_norm(const Tensor& t);

// Contraction over the sample mode: result(m, i_2..i_N) = sum_s y(s,m) x(s, i_2..i_N).
Tensor cross_covariance(const Tensor& x, const Matrix& y);

// vec(t) under the unfolding convention: the single row of unfold(t, 1)
// when extent(1) == 1, otherwise the column-major stacking of unfold(t, 1).
Vector vec(const Tensor& t);

// Outer product of vectors; test utility.
Tensor outer(std::span<const Vector> vectors);

void require_finite(const Matrix& m, const char* what);

}  // namespace fbttr
