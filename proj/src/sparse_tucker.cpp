#include "fbttr/sparse_tucker.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>

namespace fbttr {

namespace {

constexpr double kResidualFloor = 1e-12;
constexpr double kSnrTolerance = 0.1;
constexpr int kLambdaIterations = 60;
constexpr std::size_t kHooiSweeps = 100;
constexpr double kHooiTolerance = 1e-8;
constexpr std::size_t kMaxSweeps = 200;
constexpr double kSweepTolerance = 1e-6;
constexpr std::size_t kRankCap = 10;

// Largest-magnitude entry of every column made positive.
void canonical_signs(Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index best = 0;
    m.col(j).cwiseAbs().maxCoeff(&best);
    if (m(best, j) < 0.0) m.col(j) *= -1.0;
  }
}

// Leading `rank` left singular vectors of `a`, strongest first.
Matrix leading_left_singular(const Matrix& a, std::size_t rank) {
  const Matrix gram = a * a.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::Index n = gram.rows();
  Matrix u(n, static_cast<Eigen::Index>(rank));
  for (std::size_t r = 0; r < rank; ++r) u.col(r) = es.eigenvectors().col(n - 1 - r);
  canonical_signs(u);
  return u;
}

Tensor project(const Tensor& c, const std::vector<Matrix>& all) {
  Tensor g = c;
  for (std::size_t n = 0; n < all.size(); ++n) g = mode_n_product(g, all[n].transpose(), n + 1);
  return g;
}

Tensor project_except(const Tensor& c, const std::vector<Matrix>& all, std::size_t skip) {
  Tensor g = c;
  for (std::size_t n = 0; n < all.size(); ++n) {
    if (n != skip) g = mode_n_product(g, all[n].transpose(), n + 1);
  }
  return g;
}

void hooi_pass(const Tensor& c, std::vector<Matrix>& all) {
  for (std::size_t n = 0; n < all.size(); ++n) {
    const Tensor y = project_except(c, all, n);
    all[n] = leading_left_singular(unfold(y, n + 1), static_cast<std::size_t>(all[n].cols()));
  }
}

SparseTuckerResult from_all(Tensor core, std::vector<Matrix> all) {
  SparseTuckerResult r;
  r.core = std::move(core);
  r.q = std::move(all.front());
  r.factors.assign(std::make_move_iterator(all.begin() + 1), std::make_move_iterator(all.end()));
  return r;
}

// Absolute core mass of every component of every mode.
std::vector<std::vector<double>> component_mass(const Tensor& core) {
  std::vector<std::vector<double>> mass(core.order());
  for (std::size_t n = 0; n < core.order(); ++n) {
    const Matrix u = unfold(core, n + 1).cwiseAbs();
    mass[n].resize(static_cast<std::size_t>(u.rows()));
    for (Eigen::Index r = 0; r < u.rows(); ++r) mass[n][r] = u.row(r).sum();
  }
  return mass;
}

Tensor select(const Tensor& t, const std::vector<std::vector<std::size_t>>& keep) {
  Extents shape;
  for (const auto& k : keep) shape.push_back(k.size());
  Tensor out(shape);
  std::vector<std::size_t> idx(shape.size(), 0);
  std::vector<std::size_t> src(shape.size(), 0);
  for (double& v : out.data()) {
    for (std::size_t m = 0; m < shape.size(); ++m) src[m] = keep[m][idx[m]];
    v = t(src);
    for (std::size_t m = shape.size(); m-- > 0;) {
      if (++idx[m] < shape[m]) break;
      idx[m] = 0;
    }
  }
  return out;
}

Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = m.col(cols[j]);
  return out;
}

SparseTuckerResult apply_selection(const SparseTuckerResult& r,
                                   const std::vector<std::vector<std::size_t>>& keep) {
  SparseTuckerResult out = r;
  out.core = select(r.core, keep);
  out.q = select_columns(r.q, keep[0]);
  for (std::size_t n = 0; n < r.factors.size(); ++n) {
    out.factors[n] = select_columns(r.factors[n], keep[n + 1]);
  }
  return out;
}

// Component order per mode by descending mass; stable so equal masses keep
// their original order.
std::vector<std::vector<std::size_t>> descending_order(const Tensor& core) {
  const auto mass = component_mass(core);
  std::vector<std::vector<std::size_t>> order(mass.size());
  for (std::size_t n = 0; n < mass.size(); ++n) {
    order[n].resize(mass[n].size());
    std::iota(order[n].begin(), order[n].end(), std::size_t{0});
    std::stable_sort(order[n].begin(), order[n].end(),
                     [&](std::size_t a, std::size_t b) { return mass[n][a] > mass[n][b]; });
  }
  return order;
}

double relative_change(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  const double denom = std::max(frobenius_norm(b), std::numeric_limits<double>::min());
  return frobenius_norm(a - b) / denom;
}

void check_c(const Tensor& c) {
  if (c.order() < 2) throw ShapeError("cross-covariance tensor must have order >= 2");
  const double norm = frobenius_norm(c);
  if (!std::isfinite(norm)) throw NumericalError("cross-covariance tensor is not finite");
  if (norm == 0.0) throw NumericalError("cross-covariance tensor is identically zero");
}

}  // namespace

HyperGrid HyperGrid::defaults() {
  HyperGrid g;
  for (int s = 1; s <= 50; ++s) g.snr_values.push_back(s);
  for (int t = 90; t <= 100; ++t) g.tau_values.push_back(t);
  return g;
}

HyperGrid HyperGrid::single(double snr, double tau) { return {{snr}, {tau}}; }

void HyperGrid::validate() const {
  auto check = [](const std::vector<double>& v, const char* name) {
    if (v.empty()) throw ConfigError(std::string(name) + " grid is empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) throw ConfigError(std::string(name) + " grid has non-finite value");
      if (i > 0 && !(v[i] > v[i - 1])) {
        throw ConfigError(std::string(name) + " grid must be strictly increasing");
      }
    }
  };
  check(snr_values, "snr");
  check(tau_values, "tau");
  if (snr_values.front() <= 0.0) throw ConfigError("snr grid values must be positive");
  if (tau_values.front() < 0.0 || tau_values.back() > 100.0) {
    throw ConfigError("tau grid values must lie in [0, 100]");
  }
}

Extents SparseTuckerResult::ranks() const { return core.shape(); }

std::vector<Matrix> SparseTuckerResult::all_factors() const {
  std::vector<Matrix> all;
  all.reserve(factors.size() + 1);
  all.push_back(q);
  all.insert(all.end(), factors.begin(), factors.end());
  return all;
}

Tensor reconstruct(const SparseTuckerResult& r) {
  const auto all = r.all_factors();
  Tensor out = r.core;
  for (std::size_t n = 0; n < all.size(); ++n) out = mode_n_product(out, all[n], n + 1);
  return out;
}

Extents initial_rank_caps(const Extents& shape) {
  Extents caps(shape.size());
  for (std::size_t n = 0; n < shape.size(); ++n) caps[n] = std::min(shape[n], kRankCap);
  // A mode rank above the product of the other ranks only adds null components.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t n = 0; n < caps.size(); ++n) {
      std::size_t others = 1;
      for (std::size_t m = 0; m < caps.size(); ++m) {
        if (m != n) others *= caps[m];
      }
      if (caps[n] > others) {
        caps[n] = others;
        changed = true;
      }
    }
  }
  return caps;
}

SparseTuckerResult hooi_init(const Tensor& c, const Extents& max_ranks) {
  if (max_ranks.size() != c.order()) throw ShapeError("hooi_init: one rank per mode required");
  for (std::size_t n = 0; n < c.order(); ++n) {
    if (max_ranks[n] == 0) throw ShapeError("hooi_init: ranks must be positive");
    if (c.shape()[n] == 1 && max_ranks[n] > 1) {
      throw ShapeError("hooi_init: degenerate mode " + std::to_string(n + 1) +
                       " (extent 1) cannot carry rank " + std::to_string(max_ranks[n]));
    }
    if (max_ranks[n] > c.shape()[n]) {
      throw ShapeError("hooi_init: rank " + std::to_string(max_ranks[n]) + " exceeds extent " +
                       std::to_string(c.shape()[n]) + " of mode " + std::to_string(n + 1));
    }
  }
  check_c(c);

  std::vector<Matrix> all(c.order());
  for (std::size_t n = 0; n < c.order(); ++n) all[n] = leading_left_singular(unfold(c, n + 1), max_ranks[n]);

  Tensor core = project(c, all);
  const double scale = frobenius_norm(c);
  std::size_t sweeps = 0;
  bool converged = false;
  for (; sweeps < kHooiSweeps && !converged; ++sweeps) {
    const double before = frobenius_norm(core);
    hooi_pass(c, all);
    core = project(c, all);
    converged = std::abs(frobenius_norm(core) - before) < kHooiTolerance * scale;
  }
  auto r = from_all(std::move(core), std::move(all));
  r.converged = converged;
  r.sweeps = sweeps;
  return r;
}

double lambda_from_snr(const Tensor& c, const Tensor& core, double target_snr) {
  if (!std::isfinite(target_snr) || target_snr <= 0.0) {
    throw NumericalError("target SNR must be a positive finite value");
  }
  const double c2 = std::pow(frobenius_norm(c), 2);
  const double g2 = std::pow(frobenius_norm(core), 2);
  if (!std::isfinite(c2) || !std::isfinite(g2)) throw NumericalError("non-finite tensor norm");
  if (c2 == 0.0) throw NumericalError("cannot derive shrinkage for a zero tensor");

  // Residual of the unthresholded Tucker fit; orthogonal to any core change.
  const double base = std::max(c2 - g2, 0.0);
  const auto core_data = core.data();
  auto snr_at = [&](double lambda) {
    double shrink = 0.0;
    for (double g : core_data) {
      const double d = std::min(std::abs(g), lambda);
      shrink += d * d;
    }
    const double err = base + shrink;
    if (err <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(c2 / err);
  };

  if (snr_at(0.0) <= target_snr) return 0.0;
  double lo = 0.0;
  double hi = 0.0;
  for (double g : core_data) hi = std::max(hi, std::abs(g));
  for (int it = 0; it < kLambdaIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = snr_at(mid);
    if (std::abs(s - target_snr) <= kSnrTolerance) return mid;
    if (s > target_snr) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

Tensor soft_threshold(const Tensor& core, double lambda) {
  if (!(lambda >= 0.0)) throw NumericalError("soft_threshold: lambda must be non-negative");
  Tensor out = core;
  for (double& g : out.data()) {
    const double mag = std::abs(g) - lambda;
    g = mag > 0.0 ? std::copysign(mag, g) : 0.0;
  }
  return out;
}

SparseTuckerResult prune(const SparseTuckerResult& result, double tau) {
  tau = std::clamp(tau, 0.0, 100.0);
  const double threshold = (100.0 - tau) / 100.0;
  const auto mass = component_mass(result.core);
  std::vector<std::vector<std::size_t>> keep(mass.size());
  for (std::size_t n = 0; n < mass.size(); ++n) {
    const double total = std::accumulate(mass[n].begin(), mass[n].end(), 0.0);
    for (std::size_t r = 0; r < mass[n].size(); ++r) {
      if (total > 0.0 && mass[n][r] / total > threshold) keep[n].push_back(r);
    }
    if (keep[n].empty()) {
      keep[n].push_back(static_cast<std::size_t>(
          std::max_element(mass[n].begin(), mass[n].end()) - mass[n].begin()));
    }
  }
  return apply_selection(result, keep);
}

SparseTuckerResult f_mpstd_from(const Tensor& c, const SparseTuckerResult& init, double snr,
                                double tau) {
  auto all = init.all_factors();
  std::optional<Tensor> previous;
  SparseTuckerResult current;
  bool converged = false;
  std::size_t sweep = 0;
  for (; sweep < kMaxSweeps && !converged; ++sweep) {
    if (sweep > 0) hooi_pass(c, all);
    Tensor core = project(c, all);
    core = soft_threshold(core, lambda_from_snr(c, core, snr));
    current = prune(from_all(std::move(core), all), tau);
    all = current.all_factors();
    converged = previous && relative_change(current.core, *previous) < kSweepTolerance;
    previous = current.core;
  }
  current = apply_selection(current, descending_order(current.core));
  current.snr = snr;
  current.tau = tau;
  current.converged = converged;
  current.sweeps = sweep;
  return current;
}

SparseTuckerResult f_mpstd(const Tensor& x, const Matrix& y, double snr, double tau) {
  const Tensor c = cross_covariance(x, y);
  return f_mpstd_from(c, hooi_init(c, initial_rank_caps(c.shape())), snr, tau);
}

double bic_score(const Tensor& c, const SparseTuckerResult& result) {
  const double residual = std::max(frobenius_norm(c - reconstruct(result)), kResidualFloor);
  const auto s = static_cast<double>(result.core.size());
  const auto df = static_cast<double>(
      std::count_if(result.core.data().begin(), result.core.data().end(),
                    [](double g) { return g != 0.0; }));
  return std::log(residual / s) + (std::log(s) / s) * df;
}

SparseTuckerResult truncate_to_ranks(const SparseTuckerResult& result, const Extents& ranks) {
  const Extents current = result.ranks();
  if (ranks.size() != current.size()) throw ProtocolError("truncation rank arity mismatch");
  auto order = descending_order(result.core);
  for (std::size_t n = 0; n < ranks.size(); ++n) {
    if (ranks[n] == 0 || ranks[n] > current[n]) {
      throw ProtocolError("target rank " + std::to_string(ranks[n]) + " for mode " +
                          std::to_string(n + 1) + " exceeds local rank " +
                          std::to_string(current[n]));
    }
    order[n].resize(ranks[n]);
  }
  return apply_selection(result, order);
}

Tensor score_core_of(const SparseTuckerResult& result) {
  std::vector<std::vector<std::size_t>> keep(result.core.order());
  keep[0] = {0};
  for (std::size_t n = 1; n < keep.size(); ++n) {
    keep[n].resize(result.core.shape()[n]);
    std::iota(keep[n].begin(), keep[n].end(), std::size_t{0});
  }
  return select(result.core, keep);
}

Scores project_scores(const Tensor& x, const std::vector<Matrix>& factors,
                      const Tensor& score_core) {
  if (factors.size() + 1 != x.order()) throw ShapeError("factor count does not match tensor order");
  Tensor projected = x;
  for (std::size_t n = 0; n < factors.size(); ++n) {
    projected = mode_n_product(projected, factors[n].transpose(), n + 2);
  }
  const Vector g = vec(score_core);
  const Matrix u = unfold(projected, 1);
  if (u.cols() != g.size()) throw ShapeError("score core does not match factor ranks");
  Scores s;
  s.t = u * g;
  s.scale = s.t.norm();
  if (!(s.scale > 0.0) || !std::isfinite(s.scale)) {
    throw NumericalError("score vector vanished; data carry no signal along the block");
  }
  s.t /= s.scale;
  return s;
}

Tensor block_core_from(const Tensor& x, const Matrix& t, const std::vector<Matrix>& factors) {
  Tensor g = mode_n_product(x, t.transpose(), 1);
  for (std::size_t n = 0; n < factors.size(); ++n) g = mode_n_product(g, factors[n].transpose(), n + 2);
  return g;
}

AceResult extract_block(const Tensor& x, SparseTuckerResult decomposition) {
  AceResult out;
  out.decomposition = std::move(decomposition);
  out.snr_star = out.decomposition.snr;
  out.tau_star = out.decomposition.tau;
  out.ranks = out.decomposition.ranks();
  out.q = out.decomposition.q;
  out.factors = out.decomposition.factors;
  out.score_core = score_core_of(out.decomposition);
  auto scores = project_scores(x, out.factors, out.score_core);
  out.t = std::move(scores.t);
  out.score_scale = scores.scale;
  out.block_core = block_core_from(x, out.t, out.factors);
  return out;
}

AceResult ace(const Tensor& x, const Matrix& y, const HyperGrid& grid, const AceOptions& options) {
  grid.validate();
  const Tensor c = cross_covariance(x, y);
  const SparseTuckerResult seed = hooi_init(c, initial_rank_caps(c.shape()));

  const std::size_t n_snr = grid.snr_values.size();
  const std::size_t n_tau = grid.tau_values.size();
  const std::size_t cells = n_snr * n_tau;
  std::vector<std::optional<SparseTuckerResult>> results(cells);
  std::vector<double> bic(cells, std::numeric_limits<double>::infinity());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++) {
      try {
        auto r = f_mpstd_from(c, seed, grid.snr_values[i / n_tau], grid.tau_values[i % n_tau]);
        const double b = bic_score(c, r);
        if (std::isfinite(b)) {
          bic[i] = b;
          results[i] = std::move(r);
        }
      } catch (const Error&) {
        // A failing cell is simply not a candidate.
      }
    }
  };
  std::size_t threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, cells);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  // tau* per SNR, then SNR*; strict comparisons keep the smaller value on ties.
  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < n_snr; ++s) {
    std::optional<std::size_t> best_tau;
    for (std::size_t t = 0; t < n_tau; ++t) {
      const std::size_t i = s * n_tau + t;
      if (results[i] && (!best_tau || bic[i] < bic[*best_tau])) best_tau = i;
    }
    if (best_tau && (!best || bic[*best_tau] < bic[*best])) best = best_tau;
  }
  if (!best) throw NumericalError("ace: every grid cell failed to produce a decomposition");

  AceResult out = extract_block(x, std::move(*results[*best]));
  out.bic = bic[*best];
  return out;
}

}  // namespace fbttr
