#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbttr/sparse_tucker.hpp"
#include "fbttr/tensor.hpp"

namespace fbttr {

// One deflation block.
struct Block {
  Tensor core;                  // G_k^(X), 1 x R_2 x ... x R_N
  Tensor score_core;            // direction g_k with t_k ~ E_k(1) (P_N (x) ... (x) P_2) vec(g_k)
  std::vector<Matrix> factors;  // P_k^(n), n = 2..N
  Matrix q;                     // M x R_1, orthonormal columns
  Vector d;                     // per response component, d_r = (F_k q_r)^T t_k
  double scale = 1.0;           // norm of the raw score before normalisation
  Matrix t;                     // training scores; empty for federated models

  std::size_t response_rank() const { return static_cast<std::size_t>(q.cols()); }
  friend bool operator==(const Block&, const Block&);
};

// Per-feature z-scoring captured on the training split. Empty vectors mean
// identity.
struct NormStats {
  Vector x_mean, x_std;  // one entry per feature, storage order of modes 2..N
  Vector y_mean, y_std;

  bool empty() const { return x_mean.size() == 0 && y_mean.size() == 0; }
  friend bool operator==(const NormStats&, const NormStats&);
};

NormStats compute_norm_stats(const Tensor& x, const Matrix& y);
// Pools per-partition statistics into the statistics of the union.
NormStats combine_norm_stats(const std::vector<NormStats>& parts,
                             const std::vector<std::size_t>& counts);
Tensor normalize_x(const NormStats& s, const Tensor& x);
Matrix normalize_y(const NormStats& s, const Matrix& y);
Matrix denormalize_y(const NormStats& s, const Matrix& y);

struct BttrModel {
  std::vector<Block> blocks;
  Matrix w;  // prod(I_2..I_N) x K, rows in unfold(., 1) column order
  Matrix z;  // K x M
  Extents input_shape;  // I_2..I_N
  NormStats normalization;
  std::vector<std::pair<double, double>> trace;  // (||E_k||, ||F_k||), k = 1..K+1
  bool trace_retained = false;

  std::size_t responses() const { return static_cast<std::size_t>(z.cols()); }
  // Any block with more than one response-mode component.
  bool multi_component() const;
  friend bool operator==(const BttrModel&, const BttrModel&);
};

struct FitConfig {
  std::size_t max_blocks = 1;
  double epsilon = 1e-6;
  HyperGrid grid = HyperGrid::defaults();
  bool retain_trace = true;
  AceOptions ace;

  void validate() const;
};

// Builds W and Z from the blocks. Column k of W maps X to the k-th training
// score, so unfold(X, 1) W Z replays the whole deflation sequence.
void materialize(BttrModel& model);

// E <- E - [[G; t, P...]], F <- F - t (q d)^T.
void deflate(Tensor& e, Matrix& f, const Matrix& t, const Block& block);

// Block from an extraction on the current residuals (d computed from f).
Block make_block(const AceResult& a, const Matrix& f);

BttrModel fit(const Tensor& x, const Matrix& y, const FitConfig& cfg);

// unfold(x_test, 1) W Z. Inputs must already be normalised like the training data.
Matrix predict(const BttrModel& model, const Tensor& x_test);
// Predicts with only the first `blocks` blocks.
Matrix predict(const BttrModel& model, const Tensor& x_test, std::size_t blocks);
// Applies the stored normalisation to raw inputs and undoes it on the output.
Matrix predict_raw(const BttrModel& model, const Tensor& x_test);

std::vector<std::pair<double, double>> residual_trace(const BttrModel& model);

enum class CvMetric { Pearson, RocAuc };

// Contiguous K-fold selection of the number of blocks in [1, cfg.max_blocks].
std::size_t select_k_cv(const Tensor& x, const Matrix& y, const FitConfig& cfg,
                        std::size_t folds, CvMetric metric = CvMetric::Pearson);

// Rows of a samples-first tensor / matrix.
Tensor take_samples(const Tensor& x, const std::vector<std::size_t>& rows);
Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows);

// Model file: "FBTTRv01" followed by little-endian fields (see model_io.cpp).
std::vector<unsigned char> serialize_model(const BttrModel& model);
BttrModel deserialize_model(std::span<const unsigned char> bytes);
void save_model(const BttrModel& model, const std::string& path);
BttrModel load_model(const std::string& path);

}  // namespace fbttr
