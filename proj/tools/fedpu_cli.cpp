#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedpu/error.hpp"
#include "fedpu/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string plan;
  std::string out;
  std::string params;
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  bool quiet = false;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw fedpu::ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw fedpu::ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fedpu::ConfigError("cannot write " + path.string());
  out << text;
}

fedpu::ExperimentConfig resolve_config(const Options& o) {
  if (o.config.empty()) throw fedpu::ConfigError("--config is required");
  fedpu::ExperimentConfig config = fedpu::load_config(o.config);
  if (o.seed) config.seed = *o.seed;
  if (o.rounds) config.rounds = *o.rounds;
  if (!o.out.empty()) config.output_dir = o.out;
  config.validate();
  return config;
}

fedpu::PartitionPlan resolve_plan(const Options& o, const fedpu::ExperimentConfig& config,
                                  const fedpu::Dataset& train) {
  if (o.plan.empty() || !fs::exists(o.plan)) return fedpu::make_plan(config, train);
  fedpu::PartitionPlan plan = fedpu::partition_plan_from_json(read_json(o.plan));
  if (plan.num_classes != train.num_classes) {
    throw fedpu::ConfigError("plan " + o.plan + " does not match the dataset's class count");
  }
  plan.validate(train.size());
  return plan;
}

int cmd_partition(const Options& o) {
  const auto config = resolve_config(o);
  const auto data = fedpu::load_data(config.dataset);
  const auto plan = fedpu::make_plan(config, *data.train);
  const fs::path path = !o.plan.empty() ? fs::path(o.plan) : fs::path(config.output_dir) / "plan.json";
  write_text(path, fedpu::to_json(plan).dump() + "\n");
  if (!o.quiet) {
    std::cout << fedpu::plan_summary(plan, *data.train);
    std::cout << "plan written to " << path.string() << '\n';
  }
  return 0;
}

int cmd_train(const Options& o) {
  const auto config = resolve_config(o);
  const auto data = fedpu::load_data(config.dataset);
  const auto plan = resolve_plan(o, config, *data.train);
  const fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  write_text(out_dir / "plan.json", fedpu::to_json(plan).dump() + "\n");
  const auto result =
      fedpu::run_experiment(config, plan, data, out_dir, o.quiet ? nullptr : &std::cout);
  if (!o.quiet) {
    std::cout << "config " << result.config_hash << "  results " << result.results_hash;
    if (result.final_accuracy) std::cout << "  final accuracy " << *result.final_accuracy;
    std::cout << '\n';
  }
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.params.empty()) throw fedpu::ConfigError("--params <stem> is required");
  const auto config = resolve_config(o);
  const auto data = fedpu::load_data(config.dataset);
  const auto params = fedpu::load_params(o.params);
  if (!(params.arch() == fedpu::resolve_architecture(config, *data.test))) {
    throw fedpu::ShapeError("parameters do not match the configured architecture");
  }
  const double acc = fedpu::evaluate(params, *data.test);
  std::cout << json{{"accuracy", acc}, {"samples", data.test->size()}}.dump() << '\n';
  return 0;
}

int cmd_sweep(const Options& o) {
  if (o.spec.empty()) throw fedpu::ConfigError("--spec <sweep.json> is required");
  std::optional<json> base;
  if (!o.config.empty()) base = fedpu::to_json(resolve_config(o));
  const fs::path spec_path = o.spec;
  auto spec = fedpu::sweep_from_json(read_json(spec_path), spec_path.parent_path(), base);
  if (o.seed) spec.base["seed"] = *o.seed;
  if (o.rounds) spec.base["rounds"] = *o.rounds;
  const fs::path out_dir = !o.out.empty() ? fs::path(o.out) : fs::path(spec.base["output_dir"].get<std::string>());
  const auto rows = fedpu::run_sweep(spec, out_dir, o.quiet ? nullptr : &std::cout);
  if (!o.quiet) std::cout << fedpu::sweep_csv(rows);
  return 0;
}

int cmd_theory(const Options& o) {
  const auto config = resolve_config(o);
  const auto data = fedpu::load_data(config.dataset);
  const auto plan = resolve_plan(o, config, *data.train);
  std::optional<fedpu::ParamVector> params;
  if (!o.params.empty()) params = fedpu::load_params(o.params);
  const json report = fedpu::theory_report(config, plan, data.train, params);
  const std::string text = report.dump(2) + "\n";
  if (!o.out.empty()) {
    write_text(fs::path(o.out) / "theory.json", text);
    if (!o.quiet) std::cout << "theory report written to " << (fs::path(o.out) / "theory.json").string() << '\n';
  } else {
    std::cout << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated PU learning simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)");
    sub->add_option("--plan", o.plan, "Partition plan file");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Override the master seed");
    sub->add_option("--rounds", o.rounds, "Override the number of rounds");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };

  auto* partition = app.add_subcommand("partition", "Write a partition plan");
  auto* train = app.add_subcommand("train", "Train and write results");
  auto* eval = app.add_subcommand("eval", "Evaluate saved parameters on the test split");
  auto* sweep = app.add_subcommand("sweep", "Run a list of config overrides");
  auto* theory = app.add_subcommand("theory", "Bound calculators and decomposition audit");
  for (auto* sub : {partition, train, eval, sweep, theory}) add_common(sub);
  eval->add_option("--params", o.params, "Parameter file stem (<stem>.bin + <stem>.json)");
  theory->add_option("--params", o.params, "Classifier parameters (default: initial model)");
  sweep->add_option("--spec", o.spec, "Sweep spec (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(fedpu::ExitCode::kConfig);
  }

  try {
    if (*partition) return cmd_partition(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*sweep) return cmd_sweep(o);
    if (*theory) return cmd_theory(o);
  } catch (const fedpu::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
