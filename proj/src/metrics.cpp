#include "fbttr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fbttr/errors.hpp"

namespace fbttr::metrics {

namespace {

constexpr std::size_t kExactLimit = 20;

void same_length(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw DataError(std::string(what) + ": input lengths differ");
}

// 1-based mid-ranks.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

double pearson_r(std::span<const double> a, std::span<const double> b) {
  same_length(a, b, "pearson_r");
  if (a.size() < 2) throw DataError("pearson_r: need at least two observations");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("pearson_r: zero variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  same_length(scores, labels, "roc_auc");
  const auto ranks = midranks(scores);
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!is_binary(labels[i])) throw DataError("roc_auc: labels must be 0 or 1");
    if (labels[i] == 1.0) {
      pos += 1.0;
      rank_sum += ranks[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw DataError("roc_auc: both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
  same_length(scores, labels, "accuracy");
  if (scores.empty()) throw DataError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double predicted = scores[i] >= threshold ? 1.0 : 0.0;
    if (predicted == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double c_index(std::span<const double> risk, std::span<const double> time,
               std::span<const double> event) {
  same_length(risk, time, "c_index");
  same_length(risk, event, "c_index");
  double comparable = 0.0, concordant = 0.0;
  for (std::size_t i = 0; i < risk.size(); ++i) {
    if (!is_binary(event[i])) throw DataError("c_index: event indicator must be 0 or 1");
    if (event[i] != 1.0) continue;
    for (std::size_t j = 0; j < risk.size(); ++j) {
      if (!(time[i] < time[j])) continue;
      comparable += 1.0;
      if (risk[i] > risk[j]) {
        concordant += 1.0;
      } else if (risk[i] == risk[j]) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0.0) throw DataError("c_index: no comparable pairs");
  return concordant / comparable;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  same_length(a, b, "wilcoxon_signed_rank");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (!std::isfinite(d)) throw DataError("wilcoxon_signed_rank: non-finite input");
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DataError("wilcoxon_signed_rank: all differences are zero");
  if (diffs.size() < 2) throw DataError("wilcoxon_signed_rank: fewer than two non-zero differences");

  std::vector<double> mags(diffs.size());
  std::transform(diffs.begin(), diffs.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = midranks(mags);

  WilcoxonResult out;
  out.n = diffs.size();
  double w_plus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    out.statistic += diffs[i] > 0.0 ? ranks[i] : -ranks[i];
    if (diffs[i] > 0.0) w_plus += ranks[i];
  }

  if (out.n <= kExactLimit) {
    // Mid-ranks are multiples of 1/2, so doubled ranks are integers and the
    // null distribution of W+ is a subset-sum count over them.
    std::vector<std::size_t> doubled(out.n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < out.n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<std::uint64_t> ways(total + 1, 0);
    ways[0] = 1;
    for (std::size_t r : doubled) {
      for (std::size_t s = total; s >= r; --s) {
        ways[s] += ways[s - r];
        if (s == r) break;
      }
    }
    // W = 2 W+ - sum(ranks); in doubled units W2 = 2 S - total.
    const auto observed = static_cast<long long>(std::llround(2.0 * std::abs(out.statistic)));
    std::uint64_t extreme = 0;
    for (std::size_t s = 0; s <= total; ++s) {
      const long long w2 = 2 * static_cast<long long>(s) - static_cast<long long>(total);
      if (std::llabs(w2) >= observed) extreme += ways[s];
    }
    out.p_value = static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(out.n));
    out.exact = true;
  } else {
    const double n = static_cast<double>(out.n);
    double tie_term = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (w_plus - mean) / std::sqrt(var);
    out.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
  }
  out.p_value = std::clamp(out.p_value, 0.0, 1.0);
  return out;
}

}  // namespace fbttr::metrics
