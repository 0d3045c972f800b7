#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fbttr/data/experiment.hpp"

namespace fbttr::data {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

fed::TransportKind parse_transport(const std::string& text) {
  if (text == "loopback") return fed::TransportKind::Loopback;
  if (text == "socket") return fed::TransportKind::Socket;
  throw ConfigError("key 'transport': expected loopback or socket, got '" + text + "'");
}

BttrModel central_fit(const Dataset& train, const ExperimentConfig& cfg) {
  const Matrix targets = train.targets();
  const NormStats s = cfg.normalize ? compute_norm_stats(train.x, targets) : NormStats{};
  const Tensor x = normalize_x(s, train.x);
  const Matrix y = normalize_y(s, targets);
  FitConfig fc = cfg.fit;
  if (cfg.cv_folds >= 2 && fc.max_blocks > 1) {
    const CvMetric metric = train.task == Task::Binary ? CvMetric::RocAuc : CvMetric::Pearson;
    try {
      fc.max_blocks = select_k_cv(x, y, fc, cfg.cv_folds, metric);
    } catch (const Error&) {
      // Too few samples to cross-validate: keep the configured K.
    }
  }
  BttrModel m = fit(x, y, fc);
  m.normalization = s;
  return m;
}

BttrModel federated_fit(const std::vector<Dataset>& clients, const ExperimentConfig& cfg) {
  std::vector<std::pair<Tensor, Matrix>> data;
  for (const auto& c : clients) data.emplace_back(c.x, c.targets());
  fed::FederationOptions o;
  o.transport = cfg.transport;
  o.normalize = cfg.normalize;
  o.round_timeout = cfg.round_timeout;
  o.heartbeat = cfg.heartbeat;
  return fed::run_federated_fit(data, cfg.fit, o);
}

std::vector<Dataset> hybrid_clients(std::vector<Dataset> parts, const std::vector<std::size_t>& pooled) {
  std::vector<Dataset> pool, out;
  for (auto i : pooled) pool.push_back(parts.at(i));
  out.push_back(concatenate(pool));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (std::find(pooled.begin(), pooled.end(), i) == pooled.end()) out.push_back(std::move(parts[i]));
  }
  return out;
}

double mean_finite(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n == 0 ? kNaN : s / static_cast<double>(n);
}

std::string format_value(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

Method parse_method(const std::string& text) {
  if (text == "centralized") return Method::Centralized;
  if (text == "federated") return Method::Federated;
  if (text == "hybrid") return Method::Hybrid;
  if (text == "local") return Method::Local;
  throw ConfigError("key 'mode': expected centralized, federated, hybrid or local, got '" + text + "'");
}

const char* to_string(Method method) {
  switch (method) {
    case Method::Centralized: return "centralized";
    case Method::Federated: return "federated";
    case Method::Hybrid: return "hybrid";
    case Method::Local: return "local";
  }
  return "?";
}

const std::set<std::string>& ExperimentConfig::keys() {
  static const std::set<std::string> k{
      "mode", "data", "response", "task", "event_column", "site_column", "categorical", "features",
      "ignore", "feature_shape", "synth.samples", "synth.shape", "synth.responses", "synth.blocks",
      "synth.ranks", "synth.snr_db", "clients", "partition", "alpha", "hybrid.pooled", "seed", "seeds",
      "blocks", "epsilon", "snr_grid", "tau_grid", "threads", "cv_folds", "normalize", "transport",
      "heartbeat", "round_timeout", "test_fraction", "test_blocks", "out"};
  return k;
}

ExperimentConfig ExperimentConfig::from(const Config& c) {
  c.check_keys(keys());
  ExperimentConfig e;
  if (c.has("mode")) {
    e.methods.clear();
    for (const auto& m : c.get_list("mode")) e.methods.push_back(parse_method(m));
  }
  e.data = c.get("data", e.data);
  e.schema.responses = c.get_list("response");
  e.schema.task = parse_task(c.get("task", "regression"));
  e.schema.event_column = c.get("event_column", "");
  e.schema.site_column = c.get("site_column", "");
  e.schema.categorical = c.get_list("categorical");
  e.schema.features = c.get_list("features");
  e.schema.ignore = c.get_list("ignore");
  e.schema.feature_shape = c.get_extents("feature_shape");

  e.seed = c.get_u64("seed", e.seed);
  e.seeds = c.get_size("seeds", e.seeds);
  e.synth.samples = c.get_size("synth.samples", e.synth.samples);
  if (c.has("synth.shape")) e.synth.feature_shape = c.get_extents("synth.shape");
  e.synth.responses = c.get_size("synth.responses", e.synth.responses);
  e.synth.n_blocks = c.get_size("synth.blocks", e.synth.n_blocks);
  e.synth.block_ranks = c.get_extents("synth.ranks");
  e.synth.noise_snr_db = c.get_double("synth.snr_db", e.synth.noise_snr_db);

  e.partition.scheme = parse_scheme(c.get("partition", "iid"));
  e.partition.client_count = c.get_size("clients", e.partition.scheme == Scheme::ByColumn ? 0 : 4);
  e.partition.alpha = c.get_double("alpha", e.partition.alpha);
  for (const auto& p : c.get_list("hybrid.pooled")) {
    Config one;
    one.set("hybrid.pooled", p);
    e.hybrid_pooled.push_back(one.get_size("hybrid.pooled", 0));
  }

  e.fit.max_blocks = c.get_size("blocks", e.fit.max_blocks);
  e.fit.epsilon = c.get_double("epsilon", e.fit.epsilon);
  e.fit.grid.snr_values = c.get_range("snr_grid", e.fit.grid.snr_values);
  e.fit.grid.tau_values = c.get_range("tau_grid", e.fit.grid.tau_values);
  e.fit.ace.threads = c.get_size("threads", e.fit.ace.threads);
  e.cv_folds = c.get_size("cv_folds", e.cv_folds);
  e.normalize = c.get_bool("normalize", e.normalize);
  e.transport = parse_transport(c.get("transport", "loopback"));
  e.heartbeat = std::chrono::seconds(c.get_size("heartbeat", 5));
  e.round_timeout = fed::Millis(static_cast<std::int64_t>(c.get_double("round_timeout", 120.0) * 1000.0));
  e.test_fraction = c.get_double("test_fraction", e.test_fraction);
  e.test_blocks = c.get_size("test_blocks", e.test_blocks);
  e.out = c.get("out", e.out);
  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("key 'mode': at least one method is required");
  if (data.empty()) throw ConfigError("key 'data': expected 'synthetic' or a CSV path");
  if (data != "synthetic") {
    if (schema.responses.empty()) throw ConfigError("key 'response': required for CSV data");
    if (schema.task == Task::Survival && schema.event_column.empty()) {
      throw ConfigError("key 'event_column': required for survival data");
    }
  } else {
    synth.validate();
  }
  if (seeds == 0) throw ConfigError("key 'seeds': must be at least 1");
  try {
    fit.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("key 'blocks', 'epsilon' or grid: ") + e.what());
  }
  if (cv_folds == 1) throw ConfigError("key 'cv_folds': must be 0 (off) or at least 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("key 'test_fraction': must lie in (0, 1)");
  if (test_blocks < 2) throw ConfigError("key 'test_blocks': at least 2 blocks are needed");
  if (partition.scheme == Scheme::ByColumn && schema.site_column.empty()) {
    throw ConfigError("key 'site_column': required by partition=by_column");
  }
  if (partition.scheme != Scheme::ByColumn && partition.client_count == 0) {
    throw ConfigError("key 'clients': must be at least 1");
  }
  const bool hybrid = std::find(methods.begin(), methods.end(), Method::Hybrid) != methods.end();
  if (hybrid) {
    if (hybrid_pooled.empty()) throw ConfigError("key 'hybrid.pooled': hybrid mode needs the pooled client list");
    std::set<std::size_t> unique(hybrid_pooled.begin(), hybrid_pooled.end());
    if (unique.size() != hybrid_pooled.size()) throw ConfigError("key 'hybrid.pooled': duplicate client index");
    if (partition.client_count != 0 && *unique.rbegin() >= partition.client_count) {
      throw ConfigError("key 'hybrid.pooled': client index out of range");
    }
  }
  if (round_timeout.count() <= 0) throw ConfigError("key 'round_timeout': must be positive");
  if (heartbeat.count() <= 0) throw ConfigError("key 'heartbeat': must be positive");
}

TestSplit split_test_blocks(const Dataset& ds, double test_fraction, std::size_t blocks) {
  const std::size_t n = ds.samples();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[ds.sites.empty() ? std::string() : ds.sites[i]].push_back(i);
  TestSplit split;
  std::vector<std::size_t> test;
  for (const auto& [site, rows] : groups) {
    auto held = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(rows.size())));
    held = std::min(held, rows.size() - 1);
    const std::size_t cut = rows.size() - held;
    split.train.insert(split.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
    test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(test.begin(), test.end());
  if (test.size() < blocks) {
    throw DataError(std::to_string(test.size()) + " held-out samples cannot form " + std::to_string(blocks) +
                    " test blocks");
  }
  std::size_t pos = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t size = test.size() / blocks + (b < test.size() % blocks ? 1 : 0);
    split.blocks.emplace_back(test.begin() + static_cast<std::ptrdiff_t>(pos),
                              test.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return split;
}

std::vector<std::pair<std::string, double>> evaluate(const Dataset& test, const Matrix& predictions) {
  std::vector<std::pair<std::string, double>> out;
  auto guarded = [](auto f) {
    try {
      return f();
    } catch (const DataError&) {
      return kNaN;
    }
  };
  auto col = [](const Matrix& m, Eigen::Index j) {
    const Vector v = m.col(j);
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  switch (test.task) {
    case Task::Regression:
      for (Eigen::Index m = 0; m < test.y.cols(); ++m) {
        const auto a = col(predictions, m), b = col(test.y, m);
        std::string name = "pearson_r";
        if (test.y.cols() > 1) {
          const auto i = static_cast<std::size_t>(m);
          name += ":" + (i < test.response_names.size() ? test.response_names[i] : std::to_string(m));
        }
        out.emplace_back(name, guarded([&] { return metrics::pearson_r(a, b); }));
      }
      break;
    case Task::Binary: {
      const auto s = col(predictions, 0), l = col(test.y, 0);
      out.emplace_back("roc_auc", guarded([&] { return metrics::roc_auc(s, l); }));
      out.emplace_back("accuracy", metrics::accuracy(s, l));
      break;
    }
    case Task::Survival: {
      // Longer predicted time means lower risk.
      const Vector risk = -predictions.col(0);
      const std::vector<double> r(risk.data(), risk.data() + risk.size());
      const auto t = col(test.y, 0), e = col(test.y, 1);
      out.emplace_back("c_index", guarded([&] { return metrics::c_index(r, t, e); }));
      break;
    }
  }
  return out;
}

EvalReport summarize(const std::vector<MetricRow>& rows, std::size_t test_blocks) {
  EvalReport report;
  report.test_blocks = test_blocks;
  report.rows = rows;
  std::vector<std::string> methods, metric_names;
  auto note = [](std::vector<std::string>& list, const std::string& s) {
    if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
  };
  std::map<std::pair<std::string, std::string>, std::map<std::pair<std::uint64_t, std::size_t>, double>> series;
  for (const auto& r : rows) {
    note(methods, r.method);
    note(metric_names, r.metric);
    series[{r.method, r.metric}][{r.seed, r.block}] = r.value;
  }
  for (const auto& metric : metric_names) {
    for (const auto& method : methods) {
      const auto it = series.find({method, metric});
      if (it == series.end()) continue;
      std::vector<double> v;
      for (const auto& [unit, value] : it->second) {
        if (std::isfinite(value)) v.push_back(value);
      }
      MetricSummary s{method, metric, v.size(), kNaN, kNaN};
      if (!v.empty()) {
        s.mean = mean_finite(v);
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
      }
      report.summaries.push_back(s);
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
      for (std::size_t j = i + 1; j < methods.size(); ++j) {
        const auto a = series.find({methods[i], metric});
        const auto b = series.find({methods[j], metric});
        if (a == series.end() || b == series.end()) continue;
        Comparison c;
        c.metric = metric;
        c.method_a = methods[i];
        c.method_b = methods[j];
        std::vector<double> va, vb;
        for (const auto& [unit, value] : a->second) {
          const auto other = b->second.find(unit);
          if (other != b->second.end() && std::isfinite(value) && std::isfinite(other->second)) {
            va.push_back(value);
            vb.push_back(other->second);
          }
        }
        c.pairs = va.size();
        try {
          c.result = metrics::wilcoxon_signed_rank(va, vb);
          c.valid = true;
        } catch (const Error& e) {
          c.note = e.what();
        }
        report.comparisons.push_back(c);
      }
    }
  }
  return report;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "seed,method,block,metric,value\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.method << ',' << r.block << ',' << r.metric << ',' << format_value(r.value) << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("seed,method,block,metric,value", 0) != 0) {
    throw DataError(path + ": not a metrics table");
  }
  std::vector<MetricRow> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 5) throw DataError(path + ": row " + std::to_string(number) + " has " + std::to_string(f.size()) + " fields");
    try {
      MetricRow r;
      r.seed = std::stoull(f[0]);
      r.method = f[1];
      r.block = std::stoul(f[2]);
      r.metric = f[3];
      r.value = f[4] == "nan" ? kNaN : std::stod(f[4]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw DataError(path + ": row " + std::to_string(number) + " is malformed");
    }
  }
  return rows;
}

std::string report_json(const EvalReport& report) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["test_blocks"] = report.test_blocks;
  // Per-block values grouped by method and metric.
  std::map<std::string, std::map<std::string, std::vector<json>>> values;
  for (const auto& r : report.rows) {
    values[r.method][r.metric].push_back({{"seed", r.seed}, {"block", r.block}, {"value", num(r.value)}});
  }
  j["blocks"] = json::object();
  for (const auto& [method, byname] : values) {
    for (const auto& [metric, list] : byname) j["blocks"][method][metric] = list;
  }
  j["summary"] = json::array();
  for (const auto& s : report.summaries) {
    j["summary"].push_back({{"method", s.method}, {"metric", s.metric}, {"n", s.count},
                            {"mean", num(s.mean)}, {"std", num(s.std)}});
  }
  j["comparisons"] = json::array();
  for (const auto& c : report.comparisons) {
    json e{{"metric", c.metric}, {"a", c.method_a}, {"b", c.method_b}, {"pairs", c.pairs}};
    if (c.valid) {
      e["statistic"] = c.result.statistic;
      e["p_value"] = c.result.p_value;
      e["n"] = c.result.n;
      e["exact"] = c.result.exact;
    } else {
      e["p_value"] = nullptr;
      e["note"] = c.note;
    }
    j["comparisons"].push_back(e);
  }
  return j.dump(2) + "\n";
}

EvalReport run_experiment(const ExperimentConfig& cfg, const Config& resolved) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out);
  resolved.write((fs::path(cfg.out) / "resolved.conf").string());

  Dataset loaded;
  const bool synthetic = cfg.data == "synthetic";
  if (!synthetic) {
    loaded = load_csv(cfg.data, cfg.schema);
    loaded.check();
  }

  std::vector<MetricRow> rows;
  for (std::size_t r = 0; r < cfg.seeds; ++r) {
    const std::uint64_t seed = cfg.seed + r;
    Dataset ds;
    if (synthetic) {
      SyntheticSpec spec = cfg.synth;
      spec.seed = seed;
      ds = make_synthetic(spec).dataset;
    } else {
      ds = loaded;
    }
    const TestSplit split = split_test_blocks(ds, cfg.test_fraction, cfg.test_blocks);
    const Dataset train = ds.subset(split.train);
    std::vector<Dataset> tests;
    for (const auto& b : split.blocks) tests.push_back(ds.subset(b));
    PartitionPlan plan = cfg.partition;
    plan.seed = seed;

    for (const Method method : cfg.methods) {
      std::vector<BttrModel> models;
      switch (method) {
        case Method::Centralized:
          models.push_back(central_fit(train, cfg));
          break;
        case Method::Federated:
          models.push_back(federated_fit(partition(train, plan), cfg));
          break;
        case Method::Hybrid:
          models.push_back(federated_fit(hybrid_clients(partition(train, plan), cfg.hybrid_pooled), cfg));
          break;
        case Method::Local:
          for (const auto& part : partition(train, plan)) models.push_back(central_fit(part, cfg));
          break;
      }
      const std::string name = to_string(method);
      if (r == 0) {
        for (std::size_t i = 0; i < models.size(); ++i) {
          const std::string file = models.size() == 1 ? "model_" + name + ".fbttr"
                                                      : "model_" + name + "_c" + std::to_string(i) + ".fbttr";
          save_model(models[i], (fs::path(cfg.out) / file).string());
        }
      }
      for (std::size_t b = 0; b < tests.size(); ++b) {
        // Local models are scored separately and averaged per metric.
        std::vector<std::string> names;
        std::map<std::string, std::vector<double>> values;
        for (const auto& m : models) {
          for (const auto& [metric, v] : evaluate(tests[b], predict_raw(m, tests[b].x))) {
            if (!values.contains(metric)) names.push_back(metric);
            values[metric].push_back(v);
          }
        }
        for (const auto& metric : names) rows.push_back({seed, name, b + 1, metric, mean_finite(values[metric])});
      }
    }
  }

  EvalReport report = summarize(rows, cfg.test_blocks);
  write_metrics_csv(rows, (fs::path(cfg.out) / "metrics.csv").string());
  std::ofstream json_out(fs::path(cfg.out) / "report.json");
  json_out << report_json(report);
  if (!json_out) throw DataError("cannot write report.json in " + cfg.out);
  return report;
}

EvalReport run_experiment(const Config& c) { return run_experiment(ExperimentConfig::from(c), c); }

}  // namespace fbttr::data
