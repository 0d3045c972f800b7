#include "fbttr/bttr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fbttr/metrics.hpp"

namespace fbttr {

namespace {

// vec(G x_2 P_2 ... x_N P_N) for a core with unit first extent, which equals
// (P_N (x) ... (x) P_2) vec(G) without forming the Kronecker product.
Vector expand(const Tensor& core, const std::vector<Matrix>& factors) {
  Tensor g = core;
  for (std::size_t n = 0; n < factors.size(); ++n) g = mode_n_product(g, factors[n], n + 2);
  return vec(g);
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

bool same_vector(const Vector& a, const Vector& b) { return a.size() == b.size() && a == b; }

double mean_metric(const Matrix& predicted, const Matrix& truth, CvMetric metric) {
  double total = 0.0;
  for (Eigen::Index m = 0; m < truth.cols(); ++m) {
    const Vector p = predicted.col(m);
    const Vector y = truth.col(m);
    std::span<const double> ps(p.data(), p.size()), ys(y.data(), y.size());
    // A fold without variance (or without both classes) carries no ranking
    // information and scores as chance.
    try {
      total += metric == CvMetric::Pearson ? metrics::pearson_r(ps, ys) : metrics::roc_auc(ps, ys);
    } catch (const DataError&) {
      total += metric == CvMetric::Pearson ? 0.0 : 0.5;
    }
  }
  return total / static_cast<double>(truth.cols());
}

void check_training_inputs(const Tensor& x, const Matrix& y) {
  if (x.empty() || y.size() == 0) throw DataError("fit: empty data");
  if (x.order() < 2) throw ShapeError("fit: predictor tensor must have order >= 2");
  if (static_cast<std::size_t>(y.rows()) != x.extent(1)) {
    throw ShapeError("fit: " + std::to_string(y.rows()) + " response rows vs " +
                     std::to_string(x.extent(1)) + " samples");
  }
  if (!y.allFinite()) throw DataError("fit: response contains non-finite values");
}

}  // namespace

bool operator==(const Block& a, const Block& b) {
  return a.core == b.core && a.score_core == b.score_core && a.factors.size() == b.factors.size() &&
         std::equal(a.factors.begin(), a.factors.end(), b.factors.begin(), same_matrix) &&
         same_matrix(a.q, b.q) && same_vector(a.d, b.d) && a.scale == b.scale &&
         same_matrix(a.t, b.t);
}

bool operator==(const NormStats& a, const NormStats& b) {
  return same_vector(a.x_mean, b.x_mean) && same_vector(a.x_std, b.x_std) &&
         same_vector(a.y_mean, b.y_mean) && same_vector(a.y_std, b.y_std);
}

bool operator==(const BttrModel& a, const BttrModel& b) {
  return a.blocks == b.blocks && same_matrix(a.w, b.w) && same_matrix(a.z, b.z) &&
         a.input_shape == b.input_shape && a.normalization == b.normalization &&
         a.trace == b.trace && a.trace_retained == b.trace_retained;
}

bool BttrModel::multi_component() const {
  return std::any_of(blocks.begin(), blocks.end(),
                     [](const Block& b) { return b.response_rank() > 1; });
}

void FitConfig::validate() const {
  if (max_blocks < 1) throw ConfigError("max_blocks must be at least 1");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be positive");
  grid.validate();
}

NormStats compute_norm_stats(const Tensor& x, const Matrix& y) {
  const auto samples = static_cast<Eigen::Index>(x.extent(1));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> xs(x.data().data(), samples, static_cast<Eigen::Index>(x.size()) / samples);
  auto stats = [](const auto& m, Vector& mean, Vector& sd) {
    mean = m.colwise().mean().transpose();
    sd = ((m.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  };
  NormStats s;
  stats(xs, s.x_mean, s.x_std);
  stats(y, s.y_mean, s.y_std);
  return s;
}

NormStats combine_norm_stats(const std::vector<NormStats>& parts,
                             const std::vector<std::size_t>& counts) {
  if (parts.empty() || parts.size() != counts.size()) throw DataError("combine_norm_stats: bad input");
  if (parts.size() == 1) return parts.front();
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  auto pool = [&](auto mean_of, auto sd_of, Vector& mean, Vector& sd) {
    const Eigen::Index n = mean_of(parts[0]).size();
    mean = Vector::Zero(n);
    Vector second = Vector::Zero(n);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double w = static_cast<double>(counts[k]) / total;
      if (mean_of(parts[k]).size() != n) throw DataError("combine_norm_stats: feature count mismatch");
      mean += w * mean_of(parts[k]);
      Vector var = sd_of(parts[k]).array().square();
      second += w * (var + mean_of(parts[k]).array().square().matrix());
    }
    sd = (second.array() - mean.array().square()).max(0.0).sqrt();
  };
  NormStats s;
  pool([](const NormStats& p) -> const Vector& { return p.x_mean; },
       [](const NormStats& p) -> const Vector& { return p.x_std; }, s.x_mean, s.x_std);
  pool([](const NormStats& p) -> const Vector& { return p.y_mean; },
       [](const NormStats& p) -> const Vector& { return p.y_std; }, s.y_mean, s.y_std);
  return s;
}

namespace {

// Columns without spread (up to rounding) are centred but not scaled.
Vector divisors(const Vector& sd, const Vector& mean) {
  Vector out = sd;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!(sd(i) > 1e-12 * (1.0 + std::abs(mean(i))))) out(i) = 1.0;
  }
  return out;
}

}  // namespace

Tensor normalize_x(const NormStats& s, const Tensor& x) {
  if (s.x_mean.size() == 0) return x;
  const std::size_t features = x.size() / x.extent(1);
  if (static_cast<std::size_t>(s.x_mean.size()) != features) {
    throw ShapeError("normalization statistics do not match the feature count");
  }
  const Vector sd = divisors(s.x_std, s.x_mean);
  Tensor out = x;
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t f = i % features;
    data[i] = (data[i] - s.x_mean(f)) / sd(f);
  }
  return out;
}

Matrix normalize_y(const NormStats& s, const Matrix& y) {
  if (s.y_mean.size() == 0) return y;
  if (s.y_mean.size() != y.cols()) throw ShapeError("normalization statistics do not match responses");
  const Vector sd = divisors(s.y_std, s.y_mean);
  return ((y.rowwise() - s.y_mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
}

Matrix denormalize_y(const NormStats& s, const Matrix& y) {
  if (s.y_mean.size() == 0) return y;
  if (s.y_mean.size() != y.cols()) throw ShapeError("normalization statistics do not match responses");
  const Vector sd = divisors(s.y_std, s.y_mean);
  return ((y.array().rowwise() * sd.transpose().array()).matrix().rowwise() +
          s.y_mean.transpose());
}

void materialize(BttrModel& model) {
  const std::size_t k_blocks = model.blocks.size();
  if (k_blocks == 0) throw Error("materialize: model has no blocks");
  const auto features = static_cast<Eigen::Index>(product(model.input_shape));
  const auto responses = model.blocks.front().q.rows();
  model.w = Matrix::Zero(features, static_cast<Eigen::Index>(k_blocks));
  model.z = Matrix::Zero(static_cast<Eigen::Index>(k_blocks), responses);

  // t_k = E_k(1) v_k and E_k(1) = X(1) - sum_{j<k} t_j a_j^T, hence
  // w_k = v_k - sum_{j<k} w_j (a_j^T v_k) gives X(1) w_k = t_k.
  std::vector<Vector> loadings;
  for (std::size_t k = 0; k < k_blocks; ++k) {
    const Block& b = model.blocks[k];
    if (b.q.rows() != responses) throw ShapeError("materialize: response count differs across blocks");
    Vector v = expand(b.score_core, b.factors) / b.scale;
    if (v.size() != features) throw ShapeError("materialize: block does not match input shape");
    Vector w = v;
    for (std::size_t j = 0; j < k; ++j) w -= model.w.col(j) * loadings[j].dot(v);
    model.w.col(k) = w;
    loadings.push_back(expand(b.core, b.factors));
    model.z.row(k) = (b.q * b.d).transpose();
  }
}

void deflate(Tensor& e, Matrix& f, const Matrix& t, const Block& block) {
  std::map<std::size_t, Matrix> factors{{1, t}};
  for (std::size_t n = 0; n < block.factors.size(); ++n) factors.emplace(n + 2, block.factors[n]);
  e -= multilinear_product(block.core, factors);
  f -= t * (block.q * block.d).transpose();
}

Block make_block(const AceResult& a, const Matrix& f) {
  Block b;
  b.core = a.block_core;
  b.score_core = a.score_core;
  b.factors = a.factors;
  b.q = a.q;
  b.d = (f * a.q).transpose() * a.t;
  b.scale = a.score_scale;
  b.t = a.t;
  return b;
}

BttrModel fit(const Tensor& x, const Matrix& y, const FitConfig& cfg) {
  cfg.validate();
  check_training_inputs(x, y);

  BttrModel model;
  model.input_shape.assign(x.shape().begin() + 1, x.shape().end());
  model.trace_retained = cfg.retain_trace;

  Tensor e = x;
  Matrix f = y;
  model.trace.emplace_back(frobenius_norm(e), f.norm());
  for (std::size_t k = 0; k < cfg.max_blocks; ++k) {
    // The first block is always extracted.
    if (k > 0 && (frobenius_norm(e) <= cfg.epsilon || f.norm() <= cfg.epsilon)) break;
    AceResult a;
    try {
      a = ace(e, f, cfg.grid, cfg.ace);
    } catch (const Error&) {
      if (k == 0) throw;
      break;
    }
    Block b = make_block(a, f);
    deflate(e, f, b.t, b);
    model.blocks.push_back(std::move(b));
    model.trace.emplace_back(frobenius_norm(e), f.norm());
  }
  if (!cfg.retain_trace) model.trace.clear();
  materialize(model);
  return model;
}

Matrix predict(const BttrModel& model, const Tensor& x_test, std::size_t blocks) {
  if (x_test.order() != model.input_shape.size() + 1 ||
      !std::equal(model.input_shape.begin(), model.input_shape.end(), x_test.shape().begin() + 1)) {
    throw ShapeError("predict: input feature shape does not match the model");
  }
  blocks = std::min<std::size_t>(blocks, static_cast<std::size_t>(model.w.cols()));
  const auto k = static_cast<Eigen::Index>(blocks);
  return unfold(x_test, 1) * model.w.leftCols(k) * model.z.topRows(k);
}

Matrix predict(const BttrModel& model, const Tensor& x_test) {
  return predict(model, x_test, model.blocks.size());
}

Matrix predict_raw(const BttrModel& model, const Tensor& x_test) {
  return denormalize_y(model.normalization,
                       predict(model, normalize_x(model.normalization, x_test)));
}

std::vector<std::pair<double, double>> residual_trace(const BttrModel& model) {
  if (!model.trace_retained || model.trace.empty()) {
    throw Error("residual_trace: model was fitted without trace retention");
  }
  return model.trace;
}

Tensor take_samples(const Tensor& x, const std::vector<std::size_t>& rows) {
  const std::size_t stride = x.size() / x.extent(1);
  Extents shape = x.shape();
  shape[0] = rows.size();
  std::vector<double> data;
  data.reserve(rows.size() * stride);
  for (auto r : rows) {
    if (r >= x.extent(1)) throw ShapeError("take_samples: row out of range");
    auto src = x.data().subspan(r * stride, stride);
    data.insert(data.end(), src.begin(), src.end());
  }
  return Tensor(std::move(shape), std::move(data));
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw ShapeError("take_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

std::size_t select_k_cv(const Tensor& x, const Matrix& y, const FitConfig& cfg, std::size_t folds,
                        CvMetric metric) {
  cfg.validate();
  check_training_inputs(x, y);
  const std::size_t n = x.extent(1);
  if (folds < 2) throw ConfigError("select_k_cv: at least two folds required");
  if (n < folds) {
    throw DataError("select_k_cv: " + std::to_string(n) + " samples cannot form " +
                    std::to_string(folds) + " folds");
  }

  std::vector<double> score(cfg.max_blocks, 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    std::vector<std::size_t> train, valid;
    for (std::size_t i = 0; i < n; ++i) (i >= lo && i < hi ? valid : train).push_back(i);
    const BttrModel model = fit(take_samples(x, train), take_rows(y, train), cfg);
    const Tensor xv = take_samples(x, valid);
    const Matrix yv = take_rows(y, valid);
    for (std::size_t k = 1; k <= cfg.max_blocks; ++k) {
      score[k - 1] += mean_metric(predict(model, xv, k), yv, metric) / static_cast<double>(folds);
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < score.size(); ++k) {
    if (score[k] > score[best] + 1e-12) best = k;
  }
  return best + 1;
}

}  // namespace fbttr
