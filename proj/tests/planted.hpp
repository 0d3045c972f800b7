#pragma once

#include <random>
#include <vector>

#include "oracles.hpp"

namespace planted {

using fbttr::Extents;
using fbttr::Matrix;
using fbttr::Tensor;
using fbttr::Vector;

struct Data {
  Tensor x;
  Matrix y;
};

// x = sum_k s_k t_k o a_k o b_k ... with orthonormal t and mode factors,
// y(:, m) = sum_k c_k (1 + m) t_k, plus optional Gaussian noise of the given sd.
inline Data blocks(std::size_t n, const Extents& features, const std::vector<double>& strength,
                   const std::vector<double>& coef, std::uint64_t seed, double noise = 0.0,
                   std::size_t responses = 1) {
  std::mt19937_64 rng(seed);
  const auto k = static_cast<Eigen::Index>(strength.size());
  const Matrix t = oracle::random_orthonormal(static_cast<Eigen::Index>(n), k, rng);
  std::vector<Matrix> modes;
  for (auto e : features) modes.push_back(oracle::random_orthonormal(static_cast<Eigen::Index>(e), k, rng));
  Extents shape{n};
  shape.insert(shape.end(), features.begin(), features.end());
  Data p{Tensor(shape), Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(responses))};
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<Vector> vs{t.col(j)};
    for (const auto& m : modes) vs.push_back(m.col(j));
    p.x += strength[static_cast<std::size_t>(j)] * oracle::outer(vs);
    for (Eigen::Index m = 0; m < p.y.cols(); ++m) {
      p.y.col(m) += coef[static_cast<std::size_t>(j)] * static_cast<double>(1 + m) * t.col(j);
    }
  }
  if (noise > 0.0) {
    std::normal_distribution<double> g(0.0, noise);
    for (auto& v : p.x.data()) v += g(rng);
    for (Eigen::Index i = 0; i < p.y.size(); ++i) p.y.data()[i] += g(rng);
  }
  return p;
}

}  // namespace planted
