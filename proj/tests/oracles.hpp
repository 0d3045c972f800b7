#pragma once

// Reference implementations written straight from the definitions. They use
// only flat index arithmetic and loops, never the library routines they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fbttr/tensor.hpp"

namespace oracle {

using fbttr::Extents;
using fbttr::Matrix;
using fbttr::Tensor;

// Multi-index of a flat offset, first index slowest.
inline std::vector<std::size_t> multi_index(std::size_t flat, const Extents& shape) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t k = shape.size(); k-- > 0;) {
    idx[k] = flat % shape[k];
    flat /= shape[k];
  }
  return idx;
}

inline std::size_t flat_index(const std::vector<std::size_t>& idx, const Extents& shape) {
  std::size_t flat = 0;
  for (std::size_t k = 0; k < shape.size(); ++k) flat = flat * shape[k] + idx[k];
  return flat;
}

// Column of an entry: remaining modes in increasing order, earliest fastest.
inline Matrix unfold(const Tensor& t, std::size_t mode) {
  const auto& shape = t.shape();
  std::size_t cols = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k + 1 != mode) cols *= shape[k];
  }
  Matrix m(static_cast<Eigen::Index>(shape[mode - 1]), static_cast<Eigen::Index>(cols));
  for (std::size_t f = 0; f < t.size(); ++f) {
    const auto idx = multi_index(f, shape);
    std::size_t col = 0, stride = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
      if (k + 1 == mode) continue;
      col += idx[k] * stride;
      stride *= shape[k];
    }
    m(static_cast<Eigen::Index>(idx[mode - 1]), static_cast<Eigen::Index>(col)) = t.data()[f];
  }
  return m;
}

inline Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index p = 0; p < b.rows(); ++p)
        for (Eigen::Index q = 0; q < b.cols(); ++q) k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

// Entry (i_1..i_N) = prod_k v_k(i_k).
inline Tensor outer(const std::vector<fbttr::Vector>& vs) {
  Extents shape;
  for (const auto& v : vs) shape.push_back(static_cast<std::size_t>(v.size()));
  Tensor t(shape);
  for (std::size_t f = 0; f < t.size(); ++f) {
    const auto idx = multi_index(f, shape);
    double p = 1.0;
    for (std::size_t k = 0; k < vs.size(); ++k) p *= vs[k](static_cast<Eigen::Index>(idx[k]));
    t.data()[f] = p;
  }
  return t;
}

// Full multilinear product by summing over every core entry.
inline Tensor multilinear(const Tensor& core, const std::vector<Matrix>& factors) {
  Extents out_shape;
  for (const auto& f : factors) out_shape.push_back(static_cast<std::size_t>(f.rows()));
  Tensor out(out_shape);
  for (std::size_t o = 0; o < out.size(); ++o) {
    const auto oi = multi_index(o, out_shape);
    double s = 0.0;
    for (std::size_t c = 0; c < core.size(); ++c) {
      const auto ci = multi_index(c, core.shape());
      double p = core.data()[c];
      for (std::size_t k = 0; k < factors.size(); ++k) {
        p *= factors[k](static_cast<Eigen::Index>(oi[k]), static_cast<Eigen::Index>(ci[k]));
      }
      s += p;
    }
    out.data()[o] = s;
  }
  return out;
}

inline double auc(const std::vector<double>& s, const std::vector<double>& labels) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (labels[j] != 0.0) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

inline double c_index(const std::vector<double>& risk, const std::vector<double>& time,
                      const std::vector<double>& event) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < risk.size(); ++i) {
    for (std::size_t j = 0; j < risk.size(); ++j) {
      if (!(time[i] < time[j]) || event[i] != 1.0) continue;
      pairs += 1.0;
      num += risk[i] > risk[j] ? 1.0 : (risk[i] == risk[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

// Two-tailed exact signed-rank p by enumerating all 2^n sign patterns of the
// non-zero differences; ranks by pairwise comparison with ties averaged.
inline double wilcoxon_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) below += 1.0;
      if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    rank[i] = below + (equal + 1.0) / 2.0;
  }
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += d[i] > 0 ? rank[i] : -rank[i];
  std::uint64_t extreme = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) w += (mask >> i & 1) ? rank[i] : -rank[i];
    if (std::abs(w) >= std::abs(observed) - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

inline Tensor random_tensor(const Extents& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor t(shape);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Matrix random_orthonormal(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(r, c, rng));
  return qr.householderQ() * Matrix::Identity(r, c);
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace oracle
