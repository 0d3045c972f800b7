#include <cmath>
#include <map>
#include <random>

#include "fbttr/data/synthetic.hpp"

namespace fbttr::data {

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill column by column in a fixed order.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

Matrix orthonormal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, rows, cols));
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix r = qr.matrixQR();
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

double noise_sigma(double signal_norm, std::size_t count, double snr_db) {
  return signal_norm / std::sqrt(static_cast<double>(count)) * std::pow(10.0, -snr_db / 20.0);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (feature_shape.empty()) throw ConfigError("synthetic shape needs at least one feature mode");
  if (feature_shape.size() + 1 > kMaxOrder) throw ConfigError("synthetic tensor order exceeds the maximum");
  if (responses == 0) throw ConfigError("synthetic data needs at least one response");
  if (n_blocks == 0) throw ConfigError("synthetic data needs at least one planted block");
  if (samples < n_blocks) throw ConfigError("fewer samples than planted blocks");
  if (!block_ranks.empty() && block_ranks.size() != feature_shape.size()) {
    throw ConfigError("block_ranks needs one rank per feature mode");
  }
  for (std::size_t n = 0; n < feature_shape.size(); ++n) {
    const std::size_t r = block_ranks.empty() ? 1 : block_ranks[n];
    if (r == 0 || r * n_blocks > feature_shape[n]) {
      throw ConfigError("infeasible ranks: " + std::to_string(n_blocks) + " orthogonal blocks of rank " +
                        std::to_string(r) + " do not fit in mode " + std::to_string(n + 2) +
                        " of extent " + std::to_string(feature_shape[n]));
    }
  }
  if (std::isnan(noise_snr_db)) throw ConfigError("noise SNR must be a number or inf");
}

Synthetic make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.samples);
  const auto k_blocks = static_cast<Eigen::Index>(spec.n_blocks);
  const std::size_t modes = spec.feature_shape.size();
  auto rank = [&](std::size_t mode) { return spec.block_ranks.empty() ? std::size_t{1} : spec.block_ranks[mode]; };

  const Matrix t_all = orthonormal(rng, n, k_blocks);
  std::vector<Matrix> pools;
  for (std::size_t m = 0; m < modes; ++m) {
    pools.push_back(orthonormal(rng, static_cast<Eigen::Index>(spec.feature_shape[m]),
                                static_cast<Eigen::Index>(rank(m) * spec.n_blocks)));
  }

  Extents full{spec.samples};
  full.insert(full.end(), spec.feature_shape.begin(), spec.feature_shape.end());
  GroundTruth truth;
  truth.x_signal = Tensor(full);
  truth.y_signal = Matrix::Zero(n, static_cast<Eigen::Index>(spec.responses));
  const double unit = std::sqrt(static_cast<double>(spec.samples));
  for (std::size_t k = 0; k < spec.n_blocks; ++k) {
    PlantedBlock b;
    b.t = t_all.col(static_cast<Eigen::Index>(k));
    Extents core_shape{1};
    for (std::size_t m = 0; m < modes; ++m) {
      const auto r = static_cast<Eigen::Index>(rank(m));
      b.factors.push_back(pools[m].middleCols(static_cast<Eigen::Index>(k) * r, r));
      core_shape.push_back(rank(m));
    }
    // Earlier blocks are stronger so the extraction order is well defined.
    const double strength = unit * static_cast<double>(spec.n_blocks - k) / static_cast<double>(spec.n_blocks);
    Matrix g = gaussian(rng, 1, static_cast<Eigen::Index>(product(core_shape)));
    g *= strength / g.norm();
    b.core = Tensor(core_shape, {g.data(), g.data() + g.size()});
    Matrix q = gaussian(rng, static_cast<Eigen::Index>(spec.responses), 1);
    if (q(0, 0) < 0.0) q *= -1.0;
    b.q = q / q.norm();
    b.d = strength;

    std::map<std::size_t, Matrix> factors{{1, b.t}};
    for (std::size_t m = 0; m < modes; ++m) factors[m + 2] = b.factors[m];
    truth.x_signal += multilinear_product(b.core, factors);
    truth.y_signal += b.t * b.d * b.q.transpose();
    truth.blocks.push_back(std::move(b));
  }

  Dataset ds;
  ds.task = Task::Regression;
  ds.x = truth.x_signal;
  ds.y = truth.y_signal;
  if (std::isfinite(spec.noise_snr_db)) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sx = noise_sigma(frobenius_norm(truth.x_signal), truth.x_signal.size(), spec.noise_snr_db);
    for (double& v : ds.x.data()) v += sx * normal(rng);
    const double sy = noise_sigma(truth.y_signal.norm(), static_cast<std::size_t>(truth.y_signal.size()),
                                  spec.noise_snr_db);
    for (Eigen::Index i = 0; i < ds.y.rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.y.cols(); ++j) ds.y(i, j) += sy * normal(rng);
    }
  }
  const std::size_t features = product(spec.feature_shape);
  for (std::size_t f = 0; f < features; ++f) ds.feature_names.push_back("x" + std::to_string(f));
  for (std::size_t m = 0; m < spec.responses; ++m) ds.response_names.push_back("y" + std::to_string(m));
  return {std::move(ds), std::move(truth)};
}

}  // namespace fbttr::data
