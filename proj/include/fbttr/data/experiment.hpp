#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbttr/data/config.hpp"
#include "fbttr/data/dataset.hpp"
#include "fbttr/data/partition.hpp"
#include "fbttr/data/synthetic.hpp"
#include "fbttr/fed/protocol.hpp"
#include "fbttr/metrics.hpp"

namespace fbttr::data {

enum class Method { Centralized, Federated, Hybrid, Local };

Method parse_method(const std::string& text);
const char* to_string(Method method);

struct ExperimentConfig {
  std::vector<Method> methods{Method::Centralized};
  std::string data = "synthetic";  // or a CSV path
  CsvSchema schema;
  SyntheticSpec synth;
  PartitionPlan partition{Scheme::Iid, 4, 0, 0.5};
  std::vector<std::size_t> hybrid_pooled;  // client indices pooled onto one client
  std::uint64_t seed = 0;
  std::size_t seeds = 5;
  FitConfig fit;
  std::size_t cv_folds = 0;  // >= 2 selects K by contiguous CV for centralized and local fits
  bool normalize = true;
  fed::TransportKind transport = fed::TransportKind::Loopback;
  std::chrono::seconds heartbeat{5};
  fed::Millis round_timeout{120000};
  double test_fraction = 0.2;
  std::size_t test_blocks = 5;
  std::string out = "results";

  static ExperimentConfig from(const Config& c);
  static const std::set<std::string>& keys();
  void validate() const;
};

struct MetricRow {
  std::uint64_t seed = 0;
  std::string method;
  std::size_t block = 0;
  std::string metric;
  double value = 0.0;  // NaN when undefined on the block
};

struct MetricSummary {
  std::string method;
  std::string metric;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct Comparison {
  std::string metric;
  std::string method_a;
  std::string method_b;
  std::size_t pairs = 0;
  bool valid = false;
  metrics::WilcoxonResult result;
  std::string note;
};

struct EvalReport {
  std::size_t test_blocks = 0;
  std::vector<MetricRow> rows;
  std::vector<MetricSummary> summaries;
  std::vector<Comparison> comparisons;
};

// Summaries and pairwise signed-rank tests (paired over seed x block).
EvalReport summarize(const std::vector<MetricRow>& rows, std::size_t test_blocks);

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> read_metrics_csv(const std::string& path);
std::string report_json(const EvalReport& report);

// Contiguous split used by the experiments: per site (or overall) the last
// test_fraction of rows is held out; the held-out rows, in file order, form
// `blocks` contiguous test blocks.
struct TestSplit {
  std::vector<std::size_t> train;
  std::vector<std::vector<std::size_t>> blocks;
};
TestSplit split_test_blocks(const Dataset& ds, double test_fraction, std::size_t blocks);

// Metric values of one method on one test block.
std::vector<std::pair<std::string, double>> evaluate(const Dataset& test, const Matrix& predictions);

// Runs every configured method for every seed, writes the model files,
// metrics.csv, report.json and resolved.conf into cfg.out.
EvalReport run_experiment(const ExperimentConfig& cfg, const Config& resolved);
EvalReport run_experiment(const Config& c);

}  // namespace fbttr::data
