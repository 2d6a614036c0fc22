#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpu/dataset.hpp"
#include "fedpu/fedsim.hpp"
#include "fedpu/model.hpp"
#include "fedpu/partition.hpp"
#include "fedpu/risk.hpp"
#include "fedpu/theory.hpp"

namespace fedpu {

struct DatasetConfig {
  std::string kind = "mnist";  // mnist | cifar10 | synth
  std::string root;            // empty: $FEDPU_DATA_DIR/<kind>
  int synth_classes = 10;
  std::size_t synth_dim = 20;
  std::size_t synth_train_per_class = 200;
  std::size_t synth_test_per_class = 50;
  double synth_separation = 3.0;
  std::uint64_t synth_seed = 1;

  bool operator==(const DatasetConfig&) const = default;
};

struct PartitionConfig {
  std::string mode = "iid";  // iid | noniid_shards
  int num_clients = 10;
  std::size_t shards_per_client = 0;
  std::size_t total_shards = 0;        // 0: num_clients * shards_per_client
  std::vector<int> division{2};        // one entry shared by all, or one per client
  bool overlap = true;
  std::vector<double> labeled_fraction{0.5};  // one entry shared by all, or one per client
  std::optional<std::uint64_t> seed;          // default: the master seed

  bool operator==(const PartitionConfig&) const = default;
};

struct MethodConfig {
  std::string kind = "fedpu";  // fedpu | baseline1 | baseline2 | baseline3
  std::string table_mode = "multiplicity_normalized";
  std::string surrogate = "linear";
  bool clamp = false;
  std::string supervised_form = "surrogate";  // or cross_entropy; baseline1 / baseline2

  bool operator==(const MethodConfig&) const = default;
};

struct AggregationConfig {
  std::string kind = "fedavg";  // fedavg | fedsgd | fedprox
  double mu = 0.0;
  double straggler_fraction = 0.0;

  bool operator==(const AggregationConfig&) const = default;
};

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.5;
  double decay = 0.995;

  bool operator==(const OptimizerConfig&) const = default;
};

struct TheoryConfig {
  double delta = 0.05;
  double v = 1.0;

  bool operator==(const TheoryConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  PartitionConfig partition;
  std::vector<double> priors;  // empty: uniform
  MethodConfig method;
  AggregationConfig aggregation;
  std::vector<std::size_t> hidden{200};
  OptimizerConfig optimizer;
  int rounds = 200;
  int local_epochs = 1;
  std::size_t batch_size = 100;
  std::size_t max_batches_per_epoch = 0;
  int eval_stride = 1;
  int checkpoint_every = 0;
  bool record_wall_time = false;
  int threads = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/experiment";
  TheoryConfig theory;

  bool operator==(const ExperimentConfig&) const = default;

  std::uint64_t partition_seed() const { return partition.seed.value_or(seed); }
  void validate() const;  // throws ConfigError
};

// Strict: unknown keys and wrong types are ConfigErrors. Missing keys keep
// their defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
std::string fnv1a_hex(const std::string& bytes);

// Sets `value` at a dotted path ("partition.labeled_fraction") in a config
// document; the path must already exist.
void apply_override(nlohmann::json& doc, const std::string& dotted_path,
                    const nlohmann::json& value);

struct LoadedData {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;
};

// Resolves the dataset root from the config or $FEDPU_DATA_DIR. FormatError /
// ConsistencyError on bad files, ConfigError if nothing can be located.
LoadedData load_data(const DatasetConfig& config);
std::filesystem::path dataset_root(const DatasetConfig& config);

PartitionPlan make_plan(const ExperimentConfig& config, const Dataset& train);

ClassPriorVector resolve_priors(const ExperimentConfig& config, int num_classes);
ArchitectureSpec resolve_architecture(const ExperimentConfig& config, const Dataset& train);

struct PreparedRun {
  std::vector<ClientDataset> clients;
  std::vector<CrossClientTermTable> tables;
  TrainingConfig training;
};

// Client views and training settings for the configured method.
PreparedRun prepare_run(const ExperimentConfig& config, const PartitionPlan& plan,
                        const std::shared_ptr<const Dataset>& train);

struct ExperimentResult {
  std::string config_hash;
  std::string results_hash;
  std::vector<RoundLog> logs;
  std::optional<double> final_accuracy;
  std::optional<double> best_accuracy;
  double wall_ms = 0.0;
};

// Trains and writes results.csv, rounds.ndjson, summary.json, model.{bin,json}
// and periodic checkpoints into out_dir (created if needed).
ExperimentResult run_experiment(const ExperimentConfig& config, const PartitionPlan& plan,
                                const LoadedData& data, const std::filesystem::path& out_dir,
                                std::ostream* progress = nullptr);

inline constexpr const char* kResultsCsvHeader =
    "round,accuracy,mean_total_loss,term_pos,term_unl,term_cross,lr,ms";

std::string results_csv(const std::vector<RoundLog>& logs, bool record_wall_time);

// Per-client class and count table for `fedpu partition`.
std::string plan_summary(const PartitionPlan& plan, const Dataset& train);

struct SweepSpec {
  nlohmann::json base;                    // config document
  std::vector<nlohmann::json> overrides;  // objects of dotted path -> value
};

// Accepts a JSON list of override maps (base supplied separately) or an object
// {"base": <config or path>, "overrides": [...]}.
SweepSpec sweep_from_json(const nlohmann::json& doc, const std::filesystem::path& spec_dir,
                          const std::optional<nlohmann::json>& fallback_base);

struct SweepRow {
  std::size_t run = 0;
  nlohmann::json overrides;
  bool ok = false;
  std::optional<double> final_accuracy;
  std::optional<double> best_accuracy;
  std::string error;
};

// One run per override map in out_dir/run_NNN; aggregate.csv rows ordered by
// the override values (keys sorted). Failed runs are recorded and skipped.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir,
                                std::ostream* progress = nullptr);

std::string sweep_csv(const std::vector<SweepRow>& rows);

// Bound values per client, the order report and a Lemma 3 audit for each
// client on its empirical class-conditional distributions, with `params`
// (or the seeded initial model) as the classifier.
nlohmann::json theory_report(const ExperimentConfig& config, const PartitionPlan& plan,
                             const std::shared_ptr<const Dataset>& train,
                             const std::optional<ParamVector>& params);

}  // namespace fedpu
