#include "fbttr/data/dataset.hpp"

namespace fbttr::data {

Task parse_task(const std::string& text) {
  if (text == "regression") return Task::Regression;
  if (text == "binary") return Task::Binary;
  if (text == "survival") return Task::Survival;
  throw ConfigError("task must be regression, binary or survival, got '" + text + "'");
}

const char* to_string(Task task) {
  switch (task) {
    case Task::Regression: return "regression";
    case Task::Binary: return "binary";
    case Task::Survival: return "survival";
  }
  return "?";
}

void Dataset::check() const {
  if (x.order() < 2) throw DataError("dataset predictors must have a sample mode and features");
  if (static_cast<std::size_t>(y.rows()) != samples()) {
    throw DataError("dataset has " + std::to_string(samples()) + " samples but " +
                    std::to_string(y.rows()) + " response rows");
  }
  if (!sites.empty() && sites.size() != samples()) throw DataError("site labels do not match samples");
  if (task == Task::Survival && y.cols() != 2) throw DataError("survival responses must be (time, event)");
  if (task == Task::Binary) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y.data()[i] != 0.0 && y.data()[i] != 1.0) throw DataError("binary responses must be 0 or 1");
    }
  }
}

Matrix Dataset::targets() const {
  if (task == Task::Survival) return y.leftCols(1);
  return y;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.x = take_samples(x, rows);
  out.y = take_rows(y, rows);
  out.feature_names = feature_names;
  out.response_names = response_names;
  out.task = task;
  out.norm_stats = norm_stats;
  if (!sites.empty()) {
    for (auto r : rows) out.sites.push_back(sites.at(r));
  }
  return out;
}

Dataset concatenate(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw DataError("nothing to concatenate");
  const Dataset& first = parts.front();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.feature_shape() != first.feature_shape() || p.y.cols() != first.y.cols()) {
      throw DataError("cannot pool datasets with different shapes");
    }
    total += p.samples();
  }
  Extents shape = first.x.shape();
  shape[0] = total;
  Tensor x(shape);
  Matrix y(static_cast<Eigen::Index>(total), first.y.cols());
  Dataset out;
  std::size_t offset = 0, row = 0;
  for (const auto& p : parts) {
    std::copy(p.x.data().begin(), p.x.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.x.size();
    y.middleRows(static_cast<Eigen::Index>(row), p.y.rows()) = p.y;
    row += p.samples();
    out.sites.insert(out.sites.end(), p.sites.begin(), p.sites.end());
  }
  out.x = std::move(x);
  out.y = std::move(y);
  out.feature_names = first.feature_names;
  out.response_names = first.response_names;
  out.task = first.task;
  if (out.sites.size() != total) out.sites.clear();
  return out;
}

}  // namespace fbttr::data
