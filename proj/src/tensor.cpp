#include "fbttr/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace fbttr {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_shape(const Extents& shape) {
  if (shape.empty()) throw ShapeError("tensor order must be at least 1");
  if (shape.size() > kMaxOrder) {
    throw ShapeError("tensor order " + std::to_string(shape.size()) + " exceeds maximum " +
                     std::to_string(kMaxOrder));
  }
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive");
  }
}

void check_mode(const Tensor& t, std::size_t mode) {
  if (mode < 1 || mode > t.order()) {
    throw ShapeError("mode " + std::to_string(mode) + " out of range for order-" +
                     std::to_string(t.order()) + " tensor");
  }
}

// Column stride of each mode inside unfold(., mode); zero for `mode` itself.
std::vector<std::size_t> unfold_strides(const Extents& shape, std::size_t mode0) {
  std::vector<std::size_t> strides(shape.size(), 0);
  std::size_t s = 1;
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (m == mode0) continue;
    strides[m] = s;
    s *= shape[m];
  }
  return strides;
}

// Visits every multi-index in storage order, passing (flat, row, col) for the
// mode-`mode0` unfolding.
template <typename F>
void for_each_unfolded(const Extents& shape, std::size_t mode0, F&& f) {
  const auto strides = unfold_strides(shape, mode0);
  const std::size_t n = shape.size();
  std::vector<std::size_t> idx(n, 0);
  std::size_t col = 0;
  const std::size_t total = product(shape);
  for (std::size_t flat = 0; flat < total; ++flat) {
    f(flat, idx[mode0], col);
    for (std::size_t m = n; m-- > 0;) {
      if (++idx[m] < shape[m]) {
        col += strides[m];
        break;
      }
      col -= strides[m] * (shape[m] - 1);
      idx[m] = 0;
    }
  }
}

}  // namespace

std::size_t product(std::span<const std::size_t> extents) {
  return std::accumulate(extents.begin(), extents.end(), std::size_t{1}, std::multiplies<>());
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + " contains non-finite values");
}

Tensor::Tensor(Extents shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_), 0.0);
}

Tensor::Tensor(Extents shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape product " + std::to_string(product(shape_)));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw NumericalError("tensor data contains non-finite values");
  }
}

Tensor Tensor::from_matrix(const Matrix& m) {
  require_finite(m, "matrix");
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMajor>(t.data_.data(), m.rows(), m.cols()) = m;
  return t;
}

std::size_t Tensor::extent(std::size_t mode) const {
  check_mode(*this, mode);
  return shape_[mode - 1];
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index arity does not match tensor order");
  std::size_t off = 0;
  for (std::size_t m = 0; m < shape_.size(); ++m) {
    if (index[m] >= shape_[m]) throw ShapeError("tensor index out of range");
    off = off * shape_[m] + index[m];
  }
  return off;
}

double& Tensor::operator()(std::span<const std::size_t> index) { return data_[offset(index)]; }
double Tensor::operator()(std::span<const std::size_t> index) const { return data_[offset(index)]; }

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset({index.begin(), index.size()})];
}
double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset({index.begin(), index.size()})];
}

Matrix Tensor::to_matrix() const {
  if (order() != 2) throw ShapeError("to_matrix requires an order-2 tensor");
  return Eigen::Map<const RowMajor>(data_.data(), shape_[0], shape_[1]);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (shape_ != other.shape_) throw ShapeError("tensor addition shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (shape_ != other.shape_) throw ShapeError("tensor subtraction shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor t) { return t *= s; }

Matrix unfold(const Tensor& t, std::size_t mode) {
  check_mode(t, mode);
  const auto& shape = t.shape();
  const std::size_t rows = shape[mode - 1];
  Matrix m(rows, t.size() / rows);
  const auto data = t.data();
  for_each_unfolded(shape, mode - 1,
                    [&](std::size_t flat, std::size_t r, std::size_t c) { m(r, c) = data[flat]; });
  return m;
}

Tensor fold(const Matrix& m, std::size_t mode, const Extents& shape) {
  check_shape(shape);
  if (mode < 1 || mode > shape.size()) throw ShapeError("fold mode out of range");
  const std::size_t total = product(shape);
  if (static_cast<std::size_t>(m.rows()) != shape[mode - 1] ||
      static_cast<std::size_t>(m.rows() * m.cols()) != total) {
    throw ShapeError("fold: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " inconsistent with target shape for mode " + std::to_string(mode));
  }
  require_finite(m, "fold input");
  std::vector<double> data(total);
  for_each_unfolded(shape, mode - 1,
                    [&](std::size_t flat, std::size_t r, std::size_t c) { data[flat] = m(r, c); });
  return Tensor(shape, std::move(data));
}

Tensor mode_n_product(const Tensor& t, const Matrix& m, std::size_t mode) {
  check_mode(t, mode);
  const auto& shape = t.shape();
  const std::size_t in = shape[mode - 1];
  if (static_cast<std::size_t>(m.cols()) != in) {
    throw ShapeError("mode_n_product: matrix has " + std::to_string(m.cols()) +
                     " columns, mode " + std::to_string(mode) + " has extent " +
                     std::to_string(in));
  }
  require_finite(m, "mode_n_product factor");
  const std::size_t outer = product(std::span(shape).first(mode - 1));
  const std::size_t inner = product(std::span(shape).subspan(mode));
  const std::size_t out = static_cast<std::size_t>(m.rows());

  Extents out_shape = shape;
  out_shape[mode - 1] = out;
  Tensor result(out_shape);
  // Each outer slice is an (in x inner) row-major block.
  for (std::size_t l = 0; l < outer; ++l) {
    Eigen::Map<const RowMajor> src(t.data().data() + l * in * inner, in, inner);
    Eigen::Map<RowMajor> dst(result.data().data() + l * out * inner, out, inner);
    dst.noalias() = m * src;
  }
  return result;
}

Tensor multilinear_product(const Tensor& t, const std::map<std::size_t, Matrix>& factors) {
  Tensor result = t;
  for (const auto& [mode, m] : factors) result = mode_n_product(result, m, mode);
  return result;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return k;
}

Matrix reverse_kronecker(std::span<const Matrix> factors) {
  if (factors.empty()) return Matrix::Identity(1, 1);
  Matrix k = factors.back();
  for (std::size_t i = factors.size() - 1; i-- > 0;) k = kronecker(k, factors[i]);
  return k;
}

double frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

Tensor cross_covariance(const Tensor& x, const Matrix& y) {
  if (x.order() < 2) throw ShapeError("cross_covariance requires a tensor of order >= 2");
  const std::size_t samples = x.extent(1);
  if (static_cast<std::size_t>(y.rows()) != samples) {
    throw ShapeError("cross_covariance: " + std::to_string(y.rows()) + " response rows vs " +
                     std::to_string(samples) + " samples");
  }
  require_finite(y, "response matrix");
  const std::size_t features = x.size() / samples;
  Extents shape = x.shape();
  shape[0] = static_cast<std::size_t>(y.cols());
  Tensor c(shape);
  // Storage of x is (samples x features) row-major; the product lands directly
  // in the row-major layout of an M x I_2 x ... x I_N tensor.
  Eigen::Map<const RowMajor> xs(x.data().data(), samples, features);
  Eigen::Map<RowMajor> cs(c.data().data(), y.cols(), features);
  cs.noalias() = y.transpose() * xs;
  return c;
}

Vector vec(const Tensor& t) {
  const Matrix u = unfold(t, 1);
  return Eigen::Map<const Vector>(u.data(), u.size());
}

Tensor outer(std::span<const Vector> vectors) {
  Extents shape;
  for (const auto& v : vectors) shape.push_back(static_cast<std::size_t>(v.size()));
  Tensor t(shape);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (double& out : t.data()) {
    double p = 1.0;
    for (std::size_t m = 0; m < shape.size(); ++m) p *= vectors[m](idx[m]);
    out = p;
    for (std::size_t m = shape.size(); m-- > 0;) {
      if (++idx[m] < shape[m]) break;
      idx[m] = 0;
    }
  }
  return t;
}

}  // namespace fbttr
