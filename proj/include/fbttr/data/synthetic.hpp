#pragma once

#include <cstdint>
#include <limits>

#include "fbttr/data/dataset.hpp"

namespace fbttr::data {

struct SyntheticSpec {
  std::size_t samples = 200;
  Extents feature_shape{8, 10};
  std::size_t responses = 1;
  std::size_t n_blocks = 1;
  Extents block_ranks;  // per feature mode; empty means rank 1 everywhere
  double noise_snr_db = std::numeric_limits<double>::infinity();  // inf: noiseless
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlantedBlock {
  Matrix t;  // samples x 1, unit norm; orthogonal across blocks
  Tensor core;
  std::vector<Matrix> factors;  // orthonormal; mutually orthogonal across blocks
  Matrix q;  // responses x 1, unit norm
  double d = 0.0;
};

struct GroundTruth {
  std::vector<PlantedBlock> blocks;
  Tensor x_signal;
  Matrix y_signal;  // sum of t_k d_k q_k^T
};

struct Synthetic {
  Dataset dataset;
  GroundTruth truth;
};

// Plants n_blocks orthogonal multilinear components and adds Gaussian noise
// to predictors and responses at the requested SNR (dB). Same seed, same bytes.
Synthetic make_synthetic(const SyntheticSpec& spec);

}  // namespace fbttr::data
