#pragma once

#include <cstddef>
#include <vector>

#include "fbttr/tensor.hpp"

namespace fbttr {

// Candidate hyperparameters for automatic component extraction.
struct HyperGrid {
  std::vector<double> snr_values;
  std::vector<double> tau_values;

  // SNR 1..50 dB and tau 90..100, step 1.
  static HyperGrid defaults();
  static HyperGrid single(double snr, double tau);
  void validate() const;
};

// Sparse Tucker model of a cross-covariance tensor C (M x I_2 x ... x I_N):
// C ~ core x_1 q x_2 P^(2) ... x_N P^(N).
struct SparseTuckerResult {
  Tensor core;                  // R_1 x R_2 x ... x R_N
  Matrix q;                     // M x R_1
  std::vector<Matrix> factors;  // P^(n), I_n x R_n for n = 2..N
  double snr = 0.0;
  double tau = 100.0;
  bool converged = true;
  std::size_t sweeps = 0;

  // (R_1, ..., R_N).
  Extents ranks() const;
  // q followed by the feature-mode factors.
  std::vector<Matrix> all_factors() const;
};

Tensor reconstruct(const SparseTuckerResult& r);

// Per-mode rank caps used to seed the decomposition: min(I_n, 10), further
// limited so no mode exceeds the product of the others.
Extents initial_rank_caps(const Extents& shape);

SparseTuckerResult hooi_init(const Tensor& c, const Extents& max_ranks);

// Shrinkage level whose soft-thresholded reconstruction sits within 0.1 dB
// of `target_snr` (dB). Uses the orthogonality of the factors, so only the
// norm of `c` and the projected core are needed.
double lambda_from_snr(const Tensor& c, const Tensor& core, double target_snr);

Tensor soft_threshold(const Tensor& core, double lambda);

// Drops every component whose share of the mode's absolute core mass is at
// most (100 - tau) / 100, keeping at least the strongest one per mode.
SparseTuckerResult prune(const SparseTuckerResult& result, double tau);

SparseTuckerResult f_mpstd(const Tensor& x, const Matrix& y, double snr, double tau);

// Same iteration starting from a precomputed cross-covariance and HOOI seed.
// ACE evaluates every grid cell from one shared seed.
SparseTuckerResult f_mpstd_from(const Tensor& c, const SparseTuckerResult& init, double snr,
                                double tau);

double bic_score(const Tensor& c, const SparseTuckerResult& result);

// Keeps the `ranks[n]` strongest components of every mode, strongest first.
SparseTuckerResult truncate_to_ranks(const SparseTuckerResult& result, const Extents& ranks);

// The leading response-mode slice of the core (1 x R_2 x ... x R_N); it
// defines the direction whose projection of X is the score vector.
Tensor score_core_of(const SparseTuckerResult& result);

struct Scores {
  Matrix t;            // I_1 x 1, unit norm
  double scale = 0.0;  // norm of the raw projection before normalisation
};

// t = unfold(x x_2 P2^T ... x_N PN^T, 1) vec(score_core), normalised.
Scores project_scores(const Tensor& x, const std::vector<Matrix>& factors,
                      const Tensor& score_core);

// G^(X) = x x_1 t^T x_2 P2^T ... x_N PN^T.
Tensor block_core_from(const Tensor& x, const Matrix& t, const std::vector<Matrix>& factors);

struct AceResult {
  Tensor block_core;  // G^(X), 1 x R_2 x ... x R_N
  Tensor score_core;  // 1 x R_2 x ... x R_N
  Matrix q;
  Matrix t;
  std::vector<Matrix> factors;
  double snr_star = 0.0;
  double tau_star = 0.0;
  double bic = 0.0;
  double score_scale = 0.0;
  Extents ranks;  // (R_1, ..., R_N) of the selected decomposition
  SparseTuckerResult decomposition;
};

// Score vector, block core and loadings for an already selected decomposition.
AceResult extract_block(const Tensor& x, SparseTuckerResult decomposition);

struct AceOptions {
  std::size_t threads = 0;  // 0: hardware concurrency
};

AceResult ace(const Tensor& x, const Matrix& y, const HyperGrid& grid,
              const AceOptions& options = {});

}  // namespace fbttr
