#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fbttr/errors.hpp"
#include "fbttr/metrics.hpp"
#include "oracles.hpp"

using namespace fbttr;
using namespace fbttr::metrics;
using V = std::vector<double>;

TEST_CASE("pearson_r") {
  CHECK(pearson_r(V{1, 2, 3, 4}, V{1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(pearson_r(V{1, 2, 3}, V{1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pearson_r(V{1, 2, 3}, V{3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  V a(30), b(30), c(30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = g(rng);
    b[i] = a[i] + g(rng);
    c[i] = 7.0 - 3.0 * b[i];
  }
  CHECK(pearson_r(a, c) == doctest::Approx(-pearson_r(a, b)).epsilon(1e-12));

  CHECK_THROWS_AS(pearson_r(V{1, 1, 1}, V{1, 2, 3}), DataError);
  CHECK_THROWS_AS(pearson_r(V{1, 2}, V{1, 2, 3}), DataError);
  CHECK_THROWS_AS(pearson_r(V{1}, V{1}), DataError);
}

TEST_CASE("roc_auc examples") {
  CHECK(roc_auc(V{0.1, 0.4, 0.35, 0.8}, V{0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(roc_auc(V{0.5, 0.5, 0.5, 0.5}, V{0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK(roc_auc(V{1, 2, 3, 4}, V{0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(roc_auc(V{1, 2}, V{1, 1}), DataError);
  CHECK_THROWS_AS(roc_auc(V{1, 2}, V{0, 2}), DataError);
}

TEST_CASE("roc_auc matches pair enumeration on every small labelling") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coarse(0, 3);  // forces ties
  for (std::size_t n = 2; n <= 8; ++n) {
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
      V s(n), l(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = coarse(rng);
        l[i] = (mask >> i) & 1u;
      }
      CHECK(roc_auc(s, l) == doctest::Approx(oracle::auc(s, l)).epsilon(1e-12));
    }
  }
}

TEST_CASE("roc_auc is invariant to monotone transforms") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  V s(40), l(40), t(40);
  for (std::size_t i = 0; i < s.size(); ++i) {
    l[i] = i % 3 == 0 ? 1.0 : 0.0;
    s[i] = g(rng) + l[i];
    t[i] = std::exp(2.0 * s[i]) + 5.0;
  }
  CHECK(roc_auc(s, l) == doctest::Approx(roc_auc(t, l)).epsilon(1e-12));
}

TEST_CASE("accuracy") {
  CHECK(accuracy(V{0.9, 0.2, 0.6, 0.4}, V{1, 0, 0, 1}) == doctest::Approx(0.5));
  CHECK(accuracy(V{0.9, 0.2}, V{1, 0}) == doctest::Approx(1.0));
  CHECK(accuracy(V{2.0, -1.0}, V{1, 0}, 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(accuracy(V{}, V{}), DataError);
}

TEST_CASE("c_index") {
  // Comparable pairs: (1,2), (1,3), (2,3) with 1 and 2 events; (2,3) discordant.
  CHECK(c_index(V{3, 1, 2}, V{1, 2, 3}, V{1, 1, 0}) == doctest::Approx(2.0 / 3.0));
  CHECK(c_index(V{3, 2, 1}, V{1, 2, 3}, V{1, 1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(c_index(V{1, 2, 3}, V{1, 2, 3}, V{0, 0, 0}), DataError);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coarse(0, 4);
  std::bernoulli_distribution ev(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 8);
    V r(n), t(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = coarse(rng);
      t[i] = coarse(rng);
      e[i] = ev(rng) ? 1.0 : 0.0;
    }
    double comparable = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) comparable += (t[i] < t[j] && e[i] == 1.0) ? 1.0 : 0.0;
    }
    if (comparable == 0.0) {
      CHECK_THROWS_AS(c_index(r, t, e), DataError);
    } else {
      CHECK(c_index(r, t, e) == doctest::Approx(oracle::c_index(r, t, e)).epsilon(1e-12));
    }
  }
}

TEST_CASE("wilcoxon signed-rank") {
  const auto all_positive = wilcoxon_signed_rank(V{2, 3, 4, 5, 6}, V{1, 1, 1, 1, 1});
  CHECK(all_positive.exact);
  CHECK(all_positive.n == 5);
  CHECK(all_positive.p_value == doctest::Approx(0.0625).epsilon(1e-12));

  CHECK_THROWS_AS(wilcoxon_signed_rank(V{1, 2, 3}, V{1, 2, 3}), DataError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(V{1, 2, 3}, V{1, 2, 4}), DataError);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(-4, 4);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 11);
    V a(n), b(n, 0.0);
    for (auto& v : a) v = coarse(rng);
    const auto nonzero = std::count_if(a.begin(), a.end(), [](double v) { return v != 0.0; });
    if (nonzero < 2) continue;
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.p_value == doctest::Approx(oracle::wilcoxon_p(a, b)).epsilon(1e-12));
    // Swapping the samples flips the statistic and keeps p.
    const auto s = wilcoxon_signed_rank(b, a);
    CHECK(s.statistic == doctest::Approx(-r.statistic));
    CHECK(s.p_value == doctest::Approx(r.p_value).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon normal approximation for large n") {
  V a(30), b(30, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (i % 2 ? 1.0 : -1.0) * static_cast<double>(i + 1);
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
  V c(30);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<double>(i + 1);
  CHECK(wilcoxon_signed_rank(c, b).p_value < 1e-4);
}
