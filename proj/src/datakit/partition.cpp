#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "fbttr/data/partition.hpp"

namespace fbttr::data {

namespace {

// Class labels for skewed allocation: binary labels as-is, otherwise the
// quartile of the first target column.
std::vector<std::size_t> class_labels(const Dataset& ds) {
  const std::size_t n = ds.samples();
  std::vector<std::size_t> labels(n);
  const Matrix y = ds.targets();
  if (ds.task == Task::Binary) {
    for (std::size_t i = 0; i < n; ++i) labels[i] = y(static_cast<Eigen::Index>(i), 0) > 0.5 ? 1 : 0;
    return labels;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return y(static_cast<Eigen::Index>(a), 0) < y(static_cast<Eigen::Index>(b), 0);
  });
  const std::size_t bins = std::min<std::size_t>(4, n);
  for (std::size_t r = 0; r < n; ++r) labels[order[r]] = r * bins / n;
  return labels;
}

std::vector<std::vector<std::size_t>> iid(std::size_t n, std::size_t clients, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(clients);
  std::size_t pos = 0;
  for (std::size_t c = 0; c < clients; ++c) {
    const std::size_t size = n / clients + (c < n % clients ? 1 : 0);
    out[c].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

std::vector<std::vector<std::size_t>> label_skew(const Dataset& ds, const PartitionPlan& plan,
                                                 std::mt19937_64& rng) {
  const auto labels = class_labels(ds);
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::gamma_distribution<double> gamma(plan.alpha, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::vector<std::size_t>> out(plan.client_count);
    for (auto& [label, members] : by_class) {
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::vector<double> share(plan.client_count);
      double total = 0.0;
      for (auto& s : share) total += (s = gamma(rng));
      // Cumulative proportions cut the shuffled class into client chunks.
      double cumulative = 0.0;
      std::size_t start = 0;
      for (std::size_t c = 0; c < plan.client_count; ++c) {
        cumulative += share[c] / total;
        const std::size_t stop = c + 1 == plan.client_count
                                     ? shuffled.size()
                                     : std::min(shuffled.size(), static_cast<std::size_t>(std::llround(
                                                                     cumulative * static_cast<double>(shuffled.size()))));
        for (std::size_t i = start; i < std::max(start, stop); ++i) out[c].push_back(shuffled[i]);
        start = std::max(start, stop);
      }
    }
    if (std::none_of(out.begin(), out.end(), [](const auto& v) { return v.empty(); })) return out;
  }
  throw DataError("label-skew partition left a client empty after 100 draws");
}

std::vector<std::vector<std::size_t>> by_column(const Dataset& ds, const PartitionPlan& plan) {
  if (ds.sites.empty()) throw ConfigError("BY_COLUMN partition needs a site column");
  std::vector<std::string> order;
  std::map<std::string, std::size_t> index;
  for (const auto& s : ds.sites) {
    if (index.emplace(s, order.size()).second) order.push_back(s);
  }
  if (plan.client_count != 0 && plan.client_count != order.size()) {
    throw ConfigError("site column has " + std::to_string(order.size()) + " distinct values but " +
                      std::to_string(plan.client_count) + " clients were requested");
  }
  std::vector<std::vector<std::size_t>> out(order.size());
  for (std::size_t i = 0; i < ds.sites.size(); ++i) out[index[ds.sites[i]]].push_back(i);
  return out;
}

}  // namespace

Scheme parse_scheme(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "iid") return Scheme::Iid;
  if (t == "label_skew") return Scheme::LabelSkew;
  if (t == "by_column") return Scheme::ByColumn;
  throw ConfigError("partition must be iid, label_skew or by_column, got '" + text + "'");
}

const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::Iid: return "iid";
    case Scheme::LabelSkew: return "label_skew";
    case Scheme::ByColumn: return "by_column";
  }
  return "?";
}

std::vector<std::vector<std::size_t>> partition_indices(const Dataset& ds, const PartitionPlan& plan) {
  const std::size_t n = ds.samples();
  if (plan.scheme != Scheme::ByColumn) {
    if (plan.client_count == 0) throw ConfigError("client count must be at least 1");
    if (plan.client_count > n) {
      throw ConfigError(std::to_string(plan.client_count) + " clients for " + std::to_string(n) + " samples");
    }
  }
  if (!(plan.alpha > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  std::mt19937_64 rng(plan.seed);
  std::vector<std::vector<std::size_t>> out;
  switch (plan.scheme) {
    case Scheme::Iid: out = iid(n, plan.client_count, rng); break;
    case Scheme::LabelSkew: out = label_skew(ds, plan, rng); break;
    case Scheme::ByColumn: out = by_column(ds, plan); break;
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

std::vector<Dataset> partition(const Dataset& ds, const PartitionPlan& plan) {
  std::vector<Dataset> parts;
  for (const auto& rows : partition_indices(ds, plan)) parts.push_back(ds.subset(rows));
  return parts;
}

}  // namespace fbttr::data
