#include <algorithm>
#include <numeric>

#include "fbttr/fed/protocol.hpp"

namespace fbttr::fed {

namespace {

Tensor permute_mode(const Tensor& t, std::size_t mode, const std::vector<std::size_t>& perm) {
  const Matrix u = unfold(t, mode);
  Matrix out(u.rows(), u.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = u.row(perm[i]);
  return fold(out, mode, t.shape());
}

void negate_slice(Tensor& t, std::size_t mode, std::size_t index) {
  Matrix u = unfold(t, mode);
  u.row(static_cast<Eigen::Index>(index)) *= -1.0;
  t = fold(u, mode, t.shape());
}

// perm[i] = column of `other` matched to column i of `ref`, greedily by
// largest absolute inner product.
std::vector<std::size_t> greedy_match(const Matrix& ref, const Matrix& other) {
  Matrix score = (ref.transpose() * other).cwiseAbs();
  const auto r = static_cast<std::size_t>(score.rows());
  std::vector<std::size_t> perm(r);
  std::vector<bool> row_used(r, false), col_used(r, false);
  for (std::size_t step = 0; step < r; ++step) {
    double best = -1.0;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < r; ++j) {
        if (!col_used[j] && score(i, j) > best) {
          best = score(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    perm[bi] = bj;
    row_used[bi] = col_used[bj] = true;
  }
  return perm;
}

Matrix permute_columns(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(perm[i]);
  return out;
}

void check_same_shapes(const BlockParams& a, const BlockParams& b) {
  bool ok = a.core.shape() == b.core.shape() && a.score_core.shape() == b.score_core.shape() &&
            a.factors.size() == b.factors.size() && a.q.rows() == b.q.rows() &&
            a.q.cols() == b.q.cols() && a.d.size() == b.d.size();
  for (std::size_t n = 0; ok && n < a.factors.size(); ++n) {
    ok = a.factors[n].rows() == b.factors[n].rows() && a.factors[n].cols() == b.factors[n].cols();
  }
  if (!ok) throw ProtocolError("aggregate_block: updates have different shapes");
}

void align_to(BlockParams& u, const BlockParams& ref) {
  for (std::size_t n = 0; n < u.factors.size(); ++n) {
    const std::size_t mode = n + 2;
    const auto perm = greedy_match(ref.factors[n], u.factors[n]);
    u.factors[n] = permute_columns(u.factors[n], perm);
    u.core = permute_mode(u.core, mode, perm);
    u.score_core = permute_mode(u.score_core, mode, perm);
    for (Eigen::Index j = 0; j < u.factors[n].cols(); ++j) {
      if (ref.factors[n].col(j).dot(u.factors[n].col(j)) < 0.0) {
        u.factors[n].col(j) *= -1.0;
        negate_slice(u.core, mode, static_cast<std::size_t>(j));
        negate_slice(u.score_core, mode, static_cast<std::size_t>(j));
      }
    }
  }
  // Response loadings pair with the per-component coefficients.
  const auto perm = greedy_match(ref.q, u.q);
  u.q = permute_columns(u.q, perm);
  Vector d(u.d.size());
  for (std::size_t i = 0; i < perm.size(); ++i) d(static_cast<Eigen::Index>(i)) = u.d(perm[i]);
  u.d = d;
  for (Eigen::Index j = 0; j < u.q.cols(); ++j) {
    if (ref.q.col(j).dot(u.q.col(j)) < 0.0) {
      u.q.col(j) *= -1.0;
      u.d(j) *= -1.0;
    }
  }
  // Flipping the score direction flips t, hence G^(X) and d.
  if (vec(ref.score_core).dot(vec(u.score_core)) < 0.0) {
    u.score_core *= -1.0;
    u.core *= -1.0;
    u.d *= -1.0;
  }
}

// m = Q R with diag(R) >= 0.
std::pair<Matrix, Matrix> thin_qr(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  const Eigen::Index k = m.cols();
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      q.col(i) *= -1.0;
      r.row(i) *= -1.0;
    }
  }
  return {q, r};
}

}  // namespace

std::vector<double> aggregation_weights(const std::vector<std::uint64_t>& counts) {
  if (counts.empty()) throw ProtocolError("no client sample counts");
  double total = 0.0;
  for (auto c : counts) {
    if (c == 0) throw ProtocolError("client reported zero samples");
    total += static_cast<double>(c);
  }
  std::vector<double> w;
  for (auto c : counts) w.push_back(static_cast<double>(c) / total);
  return w;
}

std::vector<double> fedavg_reference(
    const std::vector<std::pair<std::vector<double>, std::uint64_t>>& updates) {
  if (updates.empty()) throw ProtocolError("fedavg_reference: no updates");
  std::vector<std::uint64_t> counts;
  for (const auto& u : updates) {
    if (u.first.size() != updates.front().first.size()) {
      throw ProtocolError("fedavg_reference: parameter vectors differ in length");
    }
    counts.push_back(u.second);
  }
  const auto w = aggregation_weights(counts);
  std::vector<double> out(updates.front().first.size(), 0.0);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[k] * updates[k].first[i];
  }
  return out;
}

Harmonization harmonize_ranks(const std::vector<AceReport>& reports) {
  if (reports.empty()) throw ProtocolError("harmonize_ranks: no reports");
  Harmonization h;
  h.target_ranks = reports.front().ranks;
  for (const auto& r : reports) {
    if (r.ranks.size() != h.target_ranks.size()) {
      throw ProtocolError("harmonize_ranks: clients report different tensor orders");
    }
    for (std::size_t n = 0; n < r.ranks.size(); ++n) {
      h.target_ranks[n] = std::max<std::size_t>(1, std::min(h.target_ranks[n], r.ranks[n]));
    }
  }
  for (const auto& r : reports) h.assignments.push_back({r.snr, r.tau, h.target_ranks});
  return h;
}

BlockParams aggregate_block(const std::vector<std::pair<BlockParams, std::uint64_t>>& updates) {
  if (updates.empty()) throw ProtocolError("aggregate_block: no updates");
  const BlockParams& ref = updates.front().first;
  std::vector<std::uint64_t> counts;
  for (const auto& [u, n] : updates) {
    check_same_shapes(ref, u);
    counts.push_back(n);
  }
  const auto w = aggregation_weights(counts);

  BlockParams mean = ref;
  mean.core *= 0.0;
  mean.score_core *= 0.0;
  for (auto& p : mean.factors) p.setZero();
  mean.q.setZero();
  mean.d.setZero();
  mean.scale = 0.0;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    BlockParams u = updates[k].first;
    if (k > 0) align_to(u, ref);
    mean.core += w[k] * u.core;
    mean.score_core += w[k] * u.score_core;
    for (std::size_t n = 0; n < u.factors.size(); ++n) mean.factors[n] += w[k] * u.factors[n];
    mean.q += w[k] * u.q;
    mean.d += w[k] * u.d;
    mean.scale += w[k] * u.scale;
  }

  for (std::size_t n = 0; n < mean.factors.size(); ++n) {
    auto [q, r] = thin_qr(mean.factors[n]);
    mean.factors[n] = q;
    mean.core = mode_n_product(mean.core, r, n + 2);
    mean.score_core = mode_n_product(mean.score_core, r, n + 2);
  }
  auto [q, r] = thin_qr(mean.q);
  mean.q = q;
  mean.d = r * mean.d;
  return mean;
}

}  // namespace fbttr::fed
