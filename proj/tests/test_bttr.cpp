#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fbttr/bttr.hpp"
#include "fbttr/errors.hpp"
#include "fbttr/metrics.hpp"
#include "oracles.hpp"
#include "planted.hpp"

using namespace fbttr;

namespace {

using Planted = planted::Data;

Planted make_planted(std::size_t n, const Extents& features, const std::vector<double>& strength,
                const std::vector<double>& coef, std::uint64_t seed, double noise = 0.0) {
  return planted::blocks(n, features, strength, coef, seed, noise);
}

double corr(const Matrix& a, const Matrix& b) {
  return metrics::pearson_r({a.data(), static_cast<std::size_t>(a.rows())},
                            {b.data(), static_cast<std::size_t>(b.rows())});
}

FitConfig small_config(std::size_t blocks) {
  FitConfig cfg;
  cfg.max_blocks = blocks;
  cfg.grid = HyperGrid::single(40.0, 95.0);
  return cfg;
}

}  // namespace

TEST_CASE("fit recovers a planted single block") {
  const auto p = make_planted(60, {6, 5}, {3.0}, {2.0}, 11);
  const auto model = fit(p.x, p.y, FitConfig{});
  REQUIRE(model.blocks.size() == 1);
  CHECK(std::abs(corr(predict(model, p.x), p.y)) >= 0.99);
}

TEST_CASE("fit rejects invalid configuration and inputs") {
  const auto p = make_planted(20, {4, 3}, {1.0}, {1.0}, 3);
  FitConfig cfg;
  cfg.max_blocks = 0;
  CHECK_THROWS_AS(fit(p.x, p.y, cfg), ConfigError);
  cfg.max_blocks = 1;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(fit(p.x, p.y, cfg), ConfigError);
  cfg.epsilon = 1e-6;
  CHECK_THROWS_AS(fit(p.x, Matrix::Zero(19, 1), cfg), ShapeError);
}

TEST_CASE("an epsilon above the residual norm still yields one block") {
  const auto p = make_planted(30, {5, 4}, {2.0, 1.0}, {1.0, 1.0}, 5);
  FitConfig cfg = small_config(4);
  cfg.epsilon = 1e6;
  CHECK(fit(p.x, p.y, cfg).blocks.size() == 1);
}

TEST_CASE("training predictions replay the deflation sequence") {
  const auto p = make_planted(40, {5, 4, 3}, {3.0, 2.0}, {1.0, -0.5}, 7, 0.05);
  const auto model = fit(p.x, p.y, small_config(3));
  Matrix replay = Matrix::Zero(p.y.rows(), p.y.cols());
  for (const auto& b : model.blocks) replay += b.t * (b.q * b.d).transpose();
  CHECK(oracle::max_abs(predict(model, p.x) - replay) <= 1e-8);

  // Prefixes replay the corresponding number of blocks.
  const auto& b0 = model.blocks.front();
  CHECK(oracle::max_abs(predict(model, p.x, 1) - b0.t * (b0.q * b0.d).transpose()) <= 1e-8);
}

TEST_CASE("prediction shapes") {
  const auto p = make_planted(30, {5, 4}, {2.0}, {1.0}, 9);
  const auto model = fit(p.x, p.y, small_config(1));
  const Tensor zero({3, 5, 4});
  const Matrix pz = predict(model, zero);
  CHECK(pz.rows() == 3);
  CHECK(oracle::max_abs(pz) == 0.0);
  CHECK(predict(model, take_samples(p.x, {4})).rows() == 1);
  CHECK_THROWS_AS(predict(model, Tensor({3, 4, 5})), ShapeError);
}

TEST_CASE("residual trace is complete and non-increasing in F") {
  const auto p = make_planted(50, {6, 5}, {3.0, 2.0}, {2.0, 1.5}, 13);
  const auto model = fit(p.x, p.y, small_config(2));
  const auto trace = residual_trace(model);
  REQUIRE(trace.size() == model.blocks.size() + 1);
  for (std::size_t k = 1; k < trace.size(); ++k) {
    CHECK(trace[k].first >= 0.0);
    CHECK(trace[k].second <= trace[k - 1].second + 1e-12);
  }
  CHECK(trace.back().second < 0.05 * trace.front().second);

  FitConfig cfg = small_config(2);
  cfg.retain_trace = false;
  CHECK_THROWS(residual_trace(fit(p.x, p.y, cfg)));
}

TEST_CASE("each block is removed from the residual it was extracted from") {
  const auto p = make_planted(40, {5, 4}, {3.0, 2.0, 1.0}, {1.0, 1.0, 1.0}, 17, 0.02);
  const auto model = fit(p.x, p.y, small_config(3));
  Tensor e = p.x;
  Matrix f = p.y;
  for (const auto& b : model.blocks) {
    deflate(e, f, b.t, b);
    const Tensor left = block_core_from(e, b.t, b.factors);
    CHECK(frobenius_norm(left) <= 1e-8 * std::max(1.0, frobenius_norm(e)));
    CHECK(std::abs(b.t.norm() - 1.0) <= 1e-10);
  }
}

TEST_CASE("cross-validation picks the planted block count") {
  const auto p = make_planted(60, {6, 5}, {3.0}, {2.0}, 19, 0.01);
  CHECK(select_k_cv(p.x, p.y, small_config(3), 5) == 1);
  CHECK_THROWS_AS(select_k_cv(p.x, p.y, small_config(2), 61), DataError);
  CHECK_THROWS_AS(select_k_cv(p.x, p.y, small_config(2), 1), ConfigError);
}

TEST_CASE("model serialization round trips bit-exactly") {
  const auto p = make_planted(30, {5, 4}, {2.0, 1.0}, {1.0, 0.5}, 21, 0.05);
  auto model = fit(p.x, p.y, small_config(2));
  model.normalization = compute_norm_stats(p.x, p.y);
  const auto bytes = serialize_model(model);
  REQUIRE(bytes.size() > 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "FBTTRv01");
  const auto back = deserialize_model(bytes);
  CHECK(back == model);
  CHECK(serialize_model(back) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad), DataError);
  const std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
  CHECK_THROWS_AS(deserialize_model(cut), DataError);

  const auto path = (std::filesystem::temp_directory_path() / "fbttr_test_model.fbttr").string();
  save_model(model, path);
  CHECK(load_model(path) == model);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_model(path), DataError);
}

TEST_CASE("normalization statistics") {
  std::mt19937_64 rng(23);
  Tensor x = oracle::random_tensor({10, 3, 2}, rng);
  const Matrix y = oracle::random_matrix(10, 2, rng);
  const auto s = compute_norm_stats(x, y);
  const Tensor xn = normalize_x(s, x);
  const Matrix xm = unfold(xn, 1);
  for (Eigen::Index c = 0; c < xm.cols(); ++c) {
    CHECK(std::abs(xm.col(c).mean()) <= 1e-12);
  }
  CHECK(oracle::max_abs(denormalize_y(s, normalize_y(s, y)) - y) <= 1e-12);

  // Pooled statistics of two parts equal the statistics of the union.
  std::vector<std::size_t> a{0, 1, 2, 3}, b{4, 5, 6, 7, 8, 9};
  const auto pooled = combine_norm_stats(
      {compute_norm_stats(take_samples(x, a), take_rows(y, a)),
       compute_norm_stats(take_samples(x, b), take_rows(y, b))},
      {a.size(), b.size()});
  CHECK(oracle::max_abs(pooled.x_mean - s.x_mean) <= 1e-12);
  CHECK(oracle::max_abs(pooled.x_std - s.x_std) <= 1e-12);
  CHECK(oracle::max_abs(pooled.y_std - s.y_std) <= 1e-12);

  // A feature constant within each part but not across them.
  for (std::size_t i = 0; i < 10; ++i) x.at({i, 0, 0}) = i < 4 ? 1.0 : 3.0;
  const auto whole = compute_norm_stats(x, y);
  const auto parts = combine_norm_stats(
      {compute_norm_stats(take_samples(x, a), take_rows(y, a)),
       compute_norm_stats(take_samples(x, b), take_rows(y, b))},
      {a.size(), b.size()});
  CHECK(oracle::max_abs(parts.x_std - whole.x_std) <= 1e-12);
}
