#pragma once

#include <cstddef>
#include <span>

namespace fbttr::metrics {

// Sample correlation. Throws when either input has zero variance.
double pearson_r(std::span<const double> a, std::span<const double> b);

// Mann-Whitney AUC with mid-rank tie handling. Labels are 0/1.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

double accuracy(std::span<const double> scores, std::span<const double> labels,
                double threshold = 0.5);

// Harrell's concordance. A pair (i, j) is comparable when time_i < time_j
// and event_i == 1; it is concordant when risk_i > risk_j, half when tied.
double c_index(std::span<const double> risk, std::span<const double> time,
               std::span<const double> event);

struct WilcoxonResult {
  double statistic = 0.0;  // signed rank sum W+ - W-
  double p_value = 1.0;    // two-tailed
  std::size_t n = 0;       // pairs with non-zero difference
  bool exact = false;
};

// Paired two-tailed signed-rank test. Exact null distribution up to 20
// non-zero differences, tie-corrected normal approximation above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace fbttr::metrics
