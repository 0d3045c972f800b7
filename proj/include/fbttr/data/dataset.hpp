#pragma once

#include <string>
#include <vector>

#include "fbttr/bttr.hpp"

namespace fbttr::data {

enum class Task { Regression, Binary, Survival };

Task parse_task(const std::string& text);
const char* to_string(Task task);

// Samples-first predictors with their responses. Survival responses are
// two columns (time, event).
struct Dataset {
  Tensor x;
  Matrix y;
  std::vector<std::string> feature_names;
  std::vector<std::string> response_names;
  Task task = Task::Regression;
  NormStats norm_stats;            // set from the training split only
  std::vector<std::string> sites;  // per-sample site label, empty when absent

  std::size_t samples() const { return x.order() == 0 ? 0 : x.extent(1); }
  Extents feature_shape() const { return {x.shape().begin() + 1, x.shape().end()}; }
  void check() const;

  // Response columns the regression is fitted on.
  Matrix targets() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

// Stacks datasets with equal feature shape along the sample mode.
Dataset concatenate(const std::vector<Dataset>& parts);

struct CsvSchema {
  std::vector<std::string> responses;
  Task task = Task::Regression;
  std::string event_column;  // survival only
  std::string site_column;   // optional, kept as labels, never a feature
  std::vector<std::string> categorical;  // one-hot encoded, levels sorted
  std::vector<std::string> features;     // empty: every remaining column
  std::vector<std::string> ignore;
  Extents feature_shape;                 // empty: flat order-2 tensor
  bool responses_optional = false;       // prediction inputs
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes features then responses with a header row; sites first when present.
void write_csv(const Dataset& ds, const std::string& path);

}  // namespace fbttr::data
