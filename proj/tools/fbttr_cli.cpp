#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fbttr/data/experiment.hpp"

using namespace fbttr;
using namespace fbttr::data;

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> assignments;
  // Named flags map onto config keys and override the file.
  std::map<std::string, std::string> flags;
};

void add_flag(CLI::App* app, Common& common, const std::string& flag, const std::string& key,
              const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.flags[key] = v; }, help);
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_path, "key=value config file");
  app->add_option("--set", common.assignments, "override one key, KEY=VALUE (repeatable)");
  add_flag(app, common, "--seed", "seed", "random seed");
  add_flag(app, common, "--blocks", "blocks", "number of blocks K");
  add_flag(app, common, "--epsilon", "epsilon", "residual threshold");
  add_flag(app, common, "--out", "out", "output directory");
  add_flag(app, common, "--data", "data", "CSV path or 'synthetic'");
}

const std::set<std::string>& all_keys() {
  static const std::set<std::string> keys = [] {
    auto k = ExperimentConfig::keys();
    k.insert({"model", "client_id", "listen", "connect"});
    return k;
  }();
  return keys;
}

Config resolve(const Common& common) {
  Config c = common.config_path.empty() ? Config{} : Config::load(common.config_path);
  for (const auto& a : common.assignments) c.set_assignment(a);
  for (const auto& [k, v] : common.flags) c.set(k, v);
  c.check_keys(all_keys());
  return c;
}

// Experiment settings minus the keys that only the CLI understands.
ExperimentConfig settings(const Config& c) {
  Config core;
  for (const auto& [k, v] : c.values()) {
    if (ExperimentConfig::keys().contains(k)) core.set(k, v);
  }
  return ExperimentConfig::from(core);
}

Dataset load_data(const ExperimentConfig& e) {
  if (e.data == "synthetic") return make_synthetic([&] {
    SyntheticSpec s = e.synth;
    s.seed = e.seed;
    return s;
  }()).dataset;
  Dataset ds = load_csv(e.data, e.schema);
  ds.check();
  return ds;
}

fs::path output_dir(const ExperimentConfig& e, const Config& c) {
  fs::path out = e.out;
  fs::create_directories(out);
  c.write((out / "resolved.conf").string());
  return out;
}

int cmd_fit(const Config& c) {
  const ExperimentConfig e = settings(c);
  const Dataset ds = load_data(e);
  const Matrix targets = ds.targets();
  const NormStats s = e.normalize ? compute_norm_stats(ds.x, targets) : NormStats{};
  const Tensor x = normalize_x(s, ds.x);
  const Matrix y = normalize_y(s, targets);
  FitConfig fc = e.fit;
  if (e.cv_folds >= 2 && fc.max_blocks > 1) {
    fc.max_blocks = select_k_cv(x, y, fc, e.cv_folds,
                                ds.task == Task::Binary ? CvMetric::RocAuc : CvMetric::Pearson);
    std::cout << "cross-validated K = " << fc.max_blocks << "\n";
  }
  BttrModel model = fit(x, y, fc);
  model.normalization = s;
  const fs::path out = output_dir(e, c);
  save_model(model, (out / "model.fbttr").string());
  std::cout << "fitted " << model.blocks.size() << " block(s) on " << ds.samples() << " samples\n";
  const Matrix pred = predict_raw(model, ds.x);
  for (Eigen::Index m = 0; m < targets.cols(); ++m) {
    const Vector a = pred.col(m), b = targets.col(m);
    try {
      std::cout << "training pearson_r[" << m << "] = "
                << metrics::pearson_r({a.data(), static_cast<std::size_t>(a.size())},
                                      {b.data(), static_cast<std::size_t>(b.size())})
                << "\n";
    } catch (const DataError&) {
      std::cout << "training pearson_r[" << m << "] undefined (constant column)\n";
    }
  }
  std::cout << "model written to " << (out / "model.fbttr").string() << "\n";
  return 0;
}

int cmd_predict(const Config& c) {
  const std::string model_path = c.require("model");
  const BttrModel model = load_model(model_path);
  CsvSchema schema;
  schema.responses = c.get_list("response");
  schema.task = parse_task(c.get("task", "regression"));
  schema.event_column = c.get("event_column", "");
  schema.site_column = c.get("site_column", "");
  schema.categorical = c.get_list("categorical");
  schema.features = c.get_list("features");
  schema.ignore = c.get_list("ignore");
  schema.feature_shape = c.get_extents("feature_shape");
  schema.responses_optional = true;
  if (schema.feature_shape.empty() && model.input_shape.size() > 1) schema.feature_shape = model.input_shape;
  const Dataset ds = load_csv(c.require("data"), schema);
  const Matrix pred = predict_raw(model, ds.x);

  const fs::path dir = c.get("out", ".");
  fs::create_directories(dir);
  const fs::path out = dir / "predictions.csv";
  std::ofstream f(out);
  if (!f) throw DataError("cannot write " + out.string());
  f.precision(17);
  for (Eigen::Index m = 0; m < pred.cols(); ++m) {
    const auto i = static_cast<std::size_t>(m);
    f << (m ? "," : "") << (i < schema.responses.size() ? schema.responses[i] : "y" + std::to_string(m));
  }
  f << "\n";
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index m = 0; m < pred.cols(); ++m) f << (m ? "," : "") << pred(r, m);
    f << "\n";
  }
  std::cout << "wrote " << pred.rows() << " predictions to " << out.string() << "\n";
  return 0;
}

int cmd_federate(const Config& c, const std::string& role) {
  const ExperimentConfig e = settings(c);
  if (role == "server") {
    const auto listen = fed::Endpoint::parse(c.require("listen"));
    const std::size_t clients = c.get_size("clients", 0);
    if (clients == 0) throw ConfigError("key 'clients': the server needs the number of clients");
    fed::TcpServerTransport transport(listen, e.heartbeat);
    std::cout << "listening on port " << transport.port() << " for " << clients << " client(s)\n" << std::flush;
    transport.accept_clients(clients, e.round_timeout);
    fed::Server server(transport, {e.fit, e.normalize, e.round_timeout});
    const BttrModel model = server.run();
    const fs::path out = output_dir(e, c);
    save_model(model, (out / "model.fbttr").string());
    std::size_t alive = 0;
    for (const auto& r : server.state().client_roster) alive += r.alive ? 1 : 0;
    std::cout << "federated model with " << model.blocks.size() << " block(s) from " << alive
              << " client(s) written to " << (out / "model.fbttr").string() << "\n";
    return 0;
  }
  if (role == "client") {
    const auto endpoint = fed::Endpoint::parse(c.require("connect"));
    const auto id = static_cast<std::uint32_t>(c.get_size("client_id", 0));
    Dataset ds = load_data(e);
    if (e.data == "synthetic") {
      // Demo mode: every client regenerates the same data and keeps its share.
      PartitionPlan plan = e.partition;
      plan.seed = e.seed;
      auto parts = partition(ds, plan);
      if (id >= parts.size()) throw ConfigError("key 'client_id': out of range for the partition");
      ds = parts[id];
    }
    fed::TcpClientTransport transport(endpoint, e.heartbeat, e.round_timeout);
    fed::ClientConfig cc;
    cc.options = {e.fit.grid, e.fit.epsilon, e.fit.ace};
    cc.normalize = e.normalize;
    cc.timeout = std::max(cc.timeout, e.round_timeout * 4);
    fed::run_client(transport, id, ds.x, ds.targets(), cc);
    std::cout << "client " << id << " finished\n";
    return 0;
  }
  throw ConfigError("--role must be server or client");
}

void print_report(const EvalReport& r) {
  std::cout << "method,metric,n,mean,std\n";
  for (const auto& s : r.summaries) {
    std::cout << s.method << "," << s.metric << "," << s.count << "," << s.mean << "," << s.std << "\n";
  }
  for (const auto& c : r.comparisons) {
    std::cout << "wilcoxon " << c.metric << " " << c.method_a << " vs " << c.method_b << ": ";
    if (c.valid) {
      std::cout << "W=" << c.result.statistic << " n=" << c.result.n << " p=" << c.result.p_value
                << (c.result.exact ? " (exact)" : " (normal)") << "\n";
    } else {
      std::cout << c.note << "\n";
    }
  }
}

int cmd_experiment(const Config& c) {
  const ExperimentConfig e = settings(c);
  const EvalReport r = run_experiment(e, c);
  print_report(r);
  std::cout << "outputs in " << e.out << "\n";
  return 0;
}

int cmd_synth(const Config& c) {
  const ExperimentConfig e = settings(c);
  SyntheticSpec s = e.synth;
  s.seed = e.seed;
  const Synthetic syn = make_synthetic(s);
  const fs::path out = output_dir(e, c);
  write_csv(syn.dataset, (out / "synthetic.csv").string());
  std::string shape;
  for (auto v : s.feature_shape) shape += (shape.empty() ? "" : "x") + std::to_string(v);
  std::cout << "wrote " << s.samples << " samples to " << (out / "synthetic.csv").string()
            << " (feature_shape = " << shape << ")\n";
  return 0;
}

int cmd_report(const Config& c) {
  const fs::path dir = c.get("out", "results");
  const auto rows = read_metrics_csv((dir / "metrics.csv").string());
  std::set<std::size_t> blocks;
  for (const auto& r : rows) blocks.insert(r.block);
  const EvalReport report = summarize(rows, blocks.size());
  std::ofstream f(dir / "report.json");
  f << report_json(report);
  if (!f) throw DataError("cannot write report.json in " + dir.string());
  print_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated block-term tensor regression"};
  app.require_subcommand(1);
  std::map<std::string, Common> common;

  auto* fit_cmd = app.add_subcommand("fit", "fit a model on one dataset");
  add_common(fit_cmd, common["fit"]);

  auto* predict_cmd = app.add_subcommand("predict", "predict with a saved model");
  add_common(predict_cmd, common["predict"]);
  add_flag(predict_cmd, common["predict"], "--model", "model", "model file");

  std::string role;
  auto* fed_cmd = app.add_subcommand("federate", "run one federation party over TCP");
  add_common(fed_cmd, common["federate"]);
  fed_cmd->add_option("--role", role, "server or client")->required()->check(CLI::IsMember({"server", "client"}));
  add_flag(fed_cmd, common["federate"], "--listen", "listen", "server HOST:PORT");
  add_flag(fed_cmd, common["federate"], "--connect", "connect", "client HOST:PORT");
  add_flag(fed_cmd, common["federate"], "--clients", "clients", "number of clients");
  add_flag(fed_cmd, common["federate"], "--client-id", "client_id", "this client's id");

  auto* exp_cmd = app.add_subcommand("experiment", "run a configured experiment");
  add_common(exp_cmd, common["experiment"]);
  add_flag(exp_cmd, common["experiment"], "--mode", "mode", "centralized|federated|hybrid|local (comma list)");
  add_flag(exp_cmd, common["experiment"], "--clients", "clients", "number of clients");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset as CSV");
  add_common(synth_cmd, common["synth"]);

  auto* report_cmd = app.add_subcommand("report", "rebuild report.json from metrics.csv");
  add_common(report_cmd, common["report"]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(resolve(common["fit"]));
    if (predict_cmd->parsed()) return cmd_predict(resolve(common["predict"]));
    if (fed_cmd->parsed()) return cmd_federate(resolve(common["federate"]), role);
    if (exp_cmd->parsed()) return cmd_experiment(resolve(common["experiment"]));
    if (synth_cmd->parsed()) return cmd_synth(resolve(common["synth"]));
    if (report_cmd->parsed()) return cmd_report(resolve(common["report"]));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
