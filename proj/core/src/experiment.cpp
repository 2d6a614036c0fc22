#include "fedpu/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedpu/error.hpp"
#include "fedpu/rng.hpp"

namespace fedpu {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kAssignStream = 0x61737367ULL;
constexpr std::uint64_t kLabelStream = 0x6c61626cULL;
constexpr std::uint64_t kSynthTestStream = 0x74657374ULL;

class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError("'" + where_ + "' must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    const json* node = find(key);
    if (node == nullptr) return;
    try {
      out = node->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + path(key) + "': " + e.what());
    }
  }

  void get_seed(const char* key, std::uint64_t& out) {
    const json* node = find(key);
    if (node == nullptr) return;
    if (!node->is_number_unsigned()) {
      throw ConfigError("'" + path(key) + "' must be a non-negative integer");
    }
    out = node->get<std::uint64_t>();
  }

  // A scalar or a list of scalars, stored as a list.
  template <typename T>
  void get_list(const char* key, std::vector<T>& out) {
    const json* node = find(key);
    if (node == nullptr) return;
    try {
      if (node->is_array()) {
        out = node->get<std::vector<T>>();
      } else {
        out = {node->get<T>()};
      }
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + path(key) + "': " + e.what());
    }
  }

  const json* find(const char* key) {
    const auto it = doc_.find(key);
    if (it == doc_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError("unknown key '" + path(item.key()) + "'");
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << bytes;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

LossKind loss_for_method(const std::string& kind) {
  if (kind == "fedpu") return LossKind::kFedPu;
  if (kind == "baseline1") return LossKind::kPositiveOnly;
  if (kind == "baseline2") return LossKind::kSupervised;
  if (kind == "baseline3") return LossKind::kSingleNegativePu;
  throw ConfigError("unknown method '" + kind + "'");
}

template <typename T>
std::vector<T> per_client(const std::vector<T>& values, int num_clients, const char* what) {
  if (values.size() == 1) return std::vector<T>(static_cast<std::size_t>(num_clients), values[0]);
  if (values.size() != static_cast<std::size_t>(num_clients)) {
    throw ConfigError(std::string(what) + " needs one entry or one per client");
  }
  return values;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.kind != "mnist" && dataset.kind != "cifar10" && dataset.kind != "synth") {
    throw ConfigError("dataset.kind must be mnist, cifar10 or synth");
  }
  if (partition.mode != "iid" && partition.mode != "noniid_shards") {
    throw ConfigError("partition.mode must be iid or noniid_shards");
  }
  if (partition.num_clients < 1) throw ConfigError("partition.num_clients must be >= 1");
  if (partition.mode == "noniid_shards" && partition.shards_per_client == 0) {
    throw ConfigError("noniid_shards needs partition.shards_per_client >= 1");
  }
  per_client(partition.division, partition.num_clients, "partition.division");
  for (double l : per_client(partition.labeled_fraction, partition.num_clients,
                             "partition.labeled_fraction")) {
    if (!(l > 0.0)) throw ConfigError("partition.labeled_fraction must be > 0");
    if (l > 1.0 && l != std::floor(l)) {
      throw ConfigError("partition.labeled_fraction above 1 must be an integer count");
    }
  }
  loss_for_method(method.kind);
  table_mode_from_string(method.table_mode);
  surrogate_kind_from_string(method.surrogate);
  supervised_form_from_string(method.supervised_form);
  aggregation_rule_from_string(aggregation.kind);
  if (!(aggregation.mu >= 0.0)) throw ConfigError("aggregation.mu must be >= 0");
  if (!(aggregation.straggler_fraction >= 0.0 && aggregation.straggler_fraction <= 1.0)) {
    throw ConfigError("aggregation.straggler_fraction must lie in [0,1]");
  }
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be > 0");
  if (!(optimizer.decay > 0.0)) throw ConfigError("optimizer.decay must be > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw ConfigError("optimizer.momentum must lie in [0,1)");
  }
  if (rounds < 0) throw ConfigError("rounds must be >= 0");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_stride < 0 || checkpoint_every < 0) {
    throw ConfigError("eval_stride and checkpoint_every must be >= 0");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(theory.delta > 0.0 && theory.delta < 1.0)) throw ConfigError("theory.delta must lie in (0,1)");
  if (!(theory.v > 0.0)) throw ConfigError("theory.v must be > 0");
  if (!priors.empty()) ClassPriorVector{priors};
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  ObjectReader top(doc, "config");
  top.get("name", c.name);
  if (const json* d = top.find("dataset")) {
    ObjectReader r(*d, "dataset");
    r.get("kind", c.dataset.kind);
    r.get("root", c.dataset.root);
    r.get("synth_classes", c.dataset.synth_classes);
    r.get("synth_dim", c.dataset.synth_dim);
    r.get("synth_train_per_class", c.dataset.synth_train_per_class);
    r.get("synth_test_per_class", c.dataset.synth_test_per_class);
    r.get("synth_separation", c.dataset.synth_separation);
    r.get_seed("synth_seed", c.dataset.synth_seed);
    r.finish();
  }
  if (const json* p = top.find("partition")) {
    ObjectReader r(*p, "partition");
    r.get("mode", c.partition.mode);
    r.get("num_clients", c.partition.num_clients);
    r.get("shards_per_client", c.partition.shards_per_client);
    r.get("total_shards", c.partition.total_shards);
    r.get_list("division", c.partition.division);
    r.get("overlap", c.partition.overlap);
    r.get_list("labeled_fraction", c.partition.labeled_fraction);
    if (const json* s = r.find("seed"); s != nullptr && !s->is_null()) {
      if (!s->is_number_unsigned()) throw ConfigError("'partition.seed' must be a non-negative integer");
      c.partition.seed = s->get<std::uint64_t>();
    }
    r.finish();
  }
  if (const json* p = top.find("priors")) {
    if (p->is_string()) {
      if (p->get<std::string>() != "uniform") throw ConfigError("priors must be \"uniform\" or a list");
    } else {
      top.get("priors", c.priors);
    }
  }
  if (const json* m = top.find("method")) {
    ObjectReader r(*m, "method");
    r.get("kind", c.method.kind);
    r.get("table_mode", c.method.table_mode);
    r.get("surrogate", c.method.surrogate);
    r.get("clamp", c.method.clamp);
    r.get("supervised_form", c.method.supervised_form);
    r.finish();
  }
  if (const json* a = top.find("aggregation")) {
    ObjectReader r(*a, "aggregation");
    r.get("kind", c.aggregation.kind);
    r.get("mu", c.aggregation.mu);
    r.get("straggler_fraction", c.aggregation.straggler_fraction);
    r.finish();
  }
  if (const json* m = top.find("model")) {
    ObjectReader r(*m, "model");
    r.get("hidden", c.hidden);
    r.finish();
  }
  if (const json* o = top.find("optimizer")) {
    ObjectReader r(*o, "optimizer");
    r.get("learning_rate", c.optimizer.learning_rate);
    r.get("momentum", c.optimizer.momentum);
    r.get("decay", c.optimizer.decay);
    r.finish();
  }
  top.get("rounds", c.rounds);
  top.get("local_epochs", c.local_epochs);
  top.get("batch_size", c.batch_size);
  top.get("max_batches_per_epoch", c.max_batches_per_epoch);
  top.get("eval_stride", c.eval_stride);
  top.get("checkpoint_every", c.checkpoint_every);
  top.get("record_wall_time", c.record_wall_time);
  top.get("threads", c.threads);
  top.get_seed("seed", c.seed);
  top.get("output_dir", c.output_dir);
  if (const json* t = top.find("theory")) {
    ObjectReader r(*t, "theory");
    r.get("delta", c.theory.delta);
    r.get("v", c.theory.v);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json doc;
  doc["name"] = c.name;
  doc["dataset"] = {{"kind", c.dataset.kind},
                    {"root", c.dataset.root},
                    {"synth_classes", c.dataset.synth_classes},
                    {"synth_dim", c.dataset.synth_dim},
                    {"synth_train_per_class", c.dataset.synth_train_per_class},
                    {"synth_test_per_class", c.dataset.synth_test_per_class},
                    {"synth_separation", c.dataset.synth_separation},
                    {"synth_seed", c.dataset.synth_seed}};
  doc["partition"] = {{"mode", c.partition.mode},
                      {"num_clients", c.partition.num_clients},
                      {"shards_per_client", c.partition.shards_per_client},
                      {"total_shards", c.partition.total_shards},
                      {"division", c.partition.division},
                      {"overlap", c.partition.overlap},
                      {"labeled_fraction", c.partition.labeled_fraction},
                      {"seed", c.partition.seed ? json(*c.partition.seed) : json(nullptr)}};
  doc["priors"] = c.priors.empty() ? json("uniform") : json(c.priors);
  doc["method"] = {{"kind", c.method.kind},
                   {"table_mode", c.method.table_mode},
                   {"surrogate", c.method.surrogate},
                   {"clamp", c.method.clamp},
                   {"supervised_form", c.method.supervised_form}};
  doc["aggregation"] = {{"kind", c.aggregation.kind},
                        {"mu", c.aggregation.mu},
                        {"straggler_fraction", c.aggregation.straggler_fraction}};
  doc["model"] = {{"hidden", c.hidden}};
  doc["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                      {"momentum", c.optimizer.momentum},
                      {"decay", c.optimizer.decay}};
  doc["rounds"] = c.rounds;
  doc["local_epochs"] = c.local_epochs;
  doc["batch_size"] = c.batch_size;
  doc["max_batches_per_epoch"] = c.max_batches_per_epoch;
  doc["eval_stride"] = c.eval_stride;
  doc["checkpoint_every"] = c.checkpoint_every;
  doc["record_wall_time"] = c.record_wall_time;
  doc["threads"] = c.threads;
  doc["seed"] = c.seed;
  doc["output_dir"] = c.output_dir;
  doc["theory"] = {{"delta", c.theory.delta}, {"v", c.theory.v}};
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = to_json(config);
  // Where results land does not change them.
  doc.erase("output_dir");
  doc.erase("threads");
  return fnv1a_hex(doc.dump());
}

void apply_override(json& doc, const std::string& dotted_path, const json& value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw ConfigError("override path '" + dotted_path + "' does not exist");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

std::filesystem::path dataset_root(const DatasetConfig& config) {
  if (!config.root.empty()) return config.root;
  const char* env = std::getenv("FEDPU_DATA_DIR");
  if (env == nullptr || *env == '\0') {
    throw ConfigError("no dataset root: set dataset.root or FEDPU_DATA_DIR");
  }
  return std::filesystem::path(env) / config.kind;
}

LoadedData load_data(const DatasetConfig& config) {
  if (config.kind == "synth") {
    auto train = std::make_shared<Dataset>(synth_gaussian(
        config.synth_classes, config.synth_dim, config.synth_train_per_class,
        config.synth_separation, config.synth_seed, Split::kTrain));
    auto test = std::make_shared<Dataset>(synth_gaussian(
        config.synth_classes, config.synth_dim, config.synth_test_per_class,
        config.synth_separation, derive_seed(config.synth_seed, kSynthTestStream), Split::kTest));
    return {std::move(train), std::move(test)};
  }
  const auto root = dataset_root(config);
  if (!std::filesystem::is_directory(root)) {
    throw ConfigError("dataset directory " + root.string() + " does not exist");
  }
  if (config.kind == "mnist") {
    auto train = std::make_shared<Dataset>(load_mnist_idx(
        root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte", Split::kTrain));
    auto test = std::make_shared<Dataset>(load_mnist_idx(
        root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte", Split::kTest));
    return {std::move(train), std::move(test)};
  }
  std::vector<std::filesystem::path> batches;
  for (int b = 1; b <= 5; ++b) batches.push_back(root / ("data_batch_" + std::to_string(b) + ".bin"));
  const std::filesystem::path test_batch = root / "test_batch.bin";
  auto train = std::make_shared<Dataset>(load_cifar10_bin(batches, Split::kTrain));
  auto test = std::make_shared<Dataset>(load_cifar10_bin(std::span(&test_batch, 1), Split::kTest));
  return {std::move(train), std::move(test)};
}

PartitionPlan make_plan(const ExperimentConfig& config, const Dataset& train) {
  config.validate();
  const auto& p = config.partition;
  const std::uint64_t seed = config.partition_seed();
  PartitionPlan plan =
      p.mode == "iid"
          ? partition_iid(train, p.num_clients, seed)
          : partition_noniid_shards(
                train, p.num_clients, p.shards_per_client,
                p.total_shards > 0 ? p.total_shards
                                   : p.shards_per_client * static_cast<std::size_t>(p.num_clients),
                seed);
  const auto division = per_client(p.division, p.num_clients, "partition.division");
  plan = assign_positive_classes(std::move(plan), train, division, p.overlap,
                                 derive_seed(seed, kAssignStream));
  const auto lambda = per_client(p.labeled_fraction, p.num_clients, "partition.labeled_fraction");
  for (std::size_t k = 0; k < plan.clients.size(); ++k) plan.clients[k].labeled_fraction = lambda[k];
  plan.validate(train.size());
  return plan;
}

ClassPriorVector resolve_priors(const ExperimentConfig& config, int num_classes) {
  if (config.priors.empty()) return ClassPriorVector::uniform(num_classes);
  if (config.priors.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("priors must have one entry per class (" + std::to_string(num_classes) + ")");
  }
  return ClassPriorVector(config.priors);
}

ArchitectureSpec resolve_architecture(const ExperimentConfig& config, const Dataset& train) {
  ArchitectureSpec arch;
  arch.input_dim = train.dim();
  arch.hidden = config.hidden;
  arch.num_classes = static_cast<std::size_t>(train.num_classes);
  arch.validate();
  return arch;
}

PreparedRun prepare_run(const ExperimentConfig& config, const PartitionPlan& plan,
                        const std::shared_ptr<const Dataset>& train) {
  config.validate();
  if (plan.num_classes != train->num_classes) {
    throw ConfigError("plan class count does not match the dataset");
  }
  plan.validate(train->size());
  PreparedRun run;
  const LossKind loss = loss_for_method(config.method.kind);
  run.clients = loss == LossKind::kSupervised
                    ? fully_labeled_clients(plan, train)
                    : label_fraction_split(plan, train, derive_seed(config.partition_seed(), kLabelStream));

  std::vector<ClientPositiveSet> sets;
  for (const auto& c : run.clients) {
    sets.push_back({c.id(), {c.positive_classes().begin(), c.positive_classes().end()}});
  }
  run.tables = build_cross_client_tables(sets, train->num_classes,
                                         table_mode_from_string(config.method.table_mode));

  TrainingConfig& t = run.training;
  t.rounds = config.rounds;
  t.aggregation = aggregation_rule_from_string(config.aggregation.kind);
  t.prox_mu = config.aggregation.mu;
  t.straggler_fraction = config.aggregation.straggler_fraction;
  t.schedule = {config.optimizer.learning_rate, config.optimizer.decay};
  t.client.local_epochs = config.local_epochs;
  t.client.batch_size = config.batch_size;
  t.client.max_batches_per_epoch = config.max_batches_per_epoch;
  t.client.loss = loss;
  t.client.surrogate = {surrogate_kind_from_string(config.method.surrogate), config.method.clamp};
  t.client.supervised_form = supervised_form_from_string(config.method.supervised_form);
  t.client.momentum = config.optimizer.momentum;
  t.seed = config.seed;
  t.eval_stride = config.eval_stride;
  t.threads = config.threads;
  return run;
}

std::string results_csv(const std::vector<RoundLog>& logs, bool record_wall_time) {
  std::string out = kResultsCsvHeader;
  out += '\n';
  for (const auto& log : logs) {
    out += std::to_string(log.round);
    out += ',';
    if (log.accuracy) out += format_double(*log.accuracy);
    out += ',' + format_double(log.mean_total());
    out += ',' + format_double(log.mean_term_pos());
    out += ',' + format_double(log.mean_term_unl());
    out += ',' + format_double(log.mean_term_cross());
    out += ',' + format_double(log.learning_rate);
    out += ',' + format_double(record_wall_time ? log.wall_ms : 0.0);
    out += '\n';
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const PartitionPlan& plan,
                                const LoadedData& data, const std::filesystem::path& out_dir,
                                std::ostream* progress) {
  const auto started = std::chrono::steady_clock::now();
  PreparedRun run = prepare_run(config, plan, data.train);
  const ArchitectureSpec arch = resolve_architecture(config, *data.train);
  const ClassPriorVector priors = resolve_priors(config, data.train->num_classes);
  const ParamVector initial = init_model(arch, derive_seed(config.seed, kInitStream));

  std::filesystem::create_directories(out_dir);
  if (config.checkpoint_every > 0) std::filesystem::create_directories(out_dir / "checkpoints");
  std::ofstream ndjson(out_dir / "rounds.ndjson", std::ios::binary);
  if (!ndjson) throw ConfigError("cannot write " + (out_dir / "rounds.ndjson").string());

  run.training.on_round = [&](const RoundLog& log, const ParamVector& params) {
    RoundLog copy = log;
    if (!config.record_wall_time) copy.wall_ms = 0.0;
    ndjson << to_json(copy).dump() << '\n';
    ndjson.flush();
    if (config.checkpoint_every > 0 && log.round % config.checkpoint_every == 0) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "round_%04d", log.round);
      save_params(params, out_dir / "checkpoints" / stem);
    }
    if (progress != nullptr) {
      *progress << "round " << log.round << "/" << config.rounds;
      if (log.accuracy) *progress << "  acc " << format_double(*log.accuracy);
      *progress << "  loss " << format_double(log.mean_total()) << "  lr "
                << format_double(log.learning_rate) << '\n';
    }
  };

  const Dataset* test = config.eval_stride > 0 ? data.test.get() : nullptr;
  TrainingResult trained = run_training(run.training, initial, run.clients, run.tables, priors, test);

  ExperimentResult result;
  result.config_hash = config_hash(config);
  result.logs = std::move(trained.logs);
  for (const auto& log : result.logs) {
    if (!log.accuracy) continue;
    result.final_accuracy = log.accuracy;
    if (!result.best_accuracy || *log.accuracy > *result.best_accuracy) {
      result.best_accuracy = log.accuracy;
    }
  }
  const std::string csv = results_csv(result.logs, config.record_wall_time);
  result.results_hash = fnv1a_hex(csv);
  write_file(out_dir / "results.csv", csv);
  save_params(trained.params, out_dir / "model");
  result.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  json summary;
  summary["config"] = to_json(config);
  summary["config_hash"] = result.config_hash;
  summary["results_hash"] = result.results_hash;
  summary["rounds"] = result.logs.size();
  json series = json::array();
  for (const auto& log : result.logs) {
    if (log.accuracy) series.push_back({{"round", log.round}, {"accuracy", *log.accuracy}});
  }
  summary["evaluated_rounds"] = series.size();
  summary["accuracy_series"] = std::move(series);
  summary["final_accuracy"] = result.final_accuracy ? json(*result.final_accuracy) : json(nullptr);
  summary["best_accuracy"] = result.best_accuracy ? json(*result.best_accuracy) : json(nullptr);
  if (!result.logs.empty()) {
    const auto& last = result.logs.back();
    summary["final_breakdown"] = {{"total", last.mean_total()},
                                  {"term_pos", last.mean_term_pos()},
                                  {"term_unl", last.mean_term_unl()},
                                  {"term_cross", last.mean_term_cross()}};
  }
  if (config.record_wall_time) summary["wall_ms"] = result.wall_ms;
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  return result;
}

std::string plan_summary(const PartitionPlan& plan, const Dataset& train) {
  std::ostringstream out;
  out << "client  samples  classes  positive\n";
  for (const auto& c : plan.clients) {
    std::set<int> present;
    for (std::size_t row : c.indices) present.insert(train.labels[row]);
    std::string pos;
    for (int p : c.positive_classes) pos += (pos.empty() ? "" : " ") + std::to_string(p);
    char line[128];
    std::snprintf(line, sizeof line, "%6d  %7zu  %7zu  ", c.id, c.indices.size(), present.size());
    out << line << pos << '\n';
  }
  return out.str();
}

SweepSpec sweep_from_json(const json& doc, const std::filesystem::path& spec_dir,
                          const std::optional<json>& fallback_base) {
  SweepSpec spec;
  const json* overrides = nullptr;
  if (doc.is_array()) {
    if (!fallback_base) throw ConfigError("a sweep given as a list needs --config for the base");
    spec.base = *fallback_base;
    overrides = &doc;
  } else if (doc.is_object()) {
    ObjectReader r(doc, "sweep");
    if (const json* base = r.find("base")) {
      if (base->is_string()) {
        spec.base = read_json_file(spec_dir / base->get<std::string>());
      } else {
        spec.base = *base;
      }
    } else if (fallback_base) {
      spec.base = *fallback_base;
    } else {
      throw ConfigError("sweep spec has no base config");
    }
    overrides = r.find("overrides");
    r.finish();
  } else {
    throw ConfigError("sweep spec must be a list or an object");
  }
  spec.base = to_json(config_from_json(spec.base));
  if (overrides != nullptr) {
    if (!overrides->is_array()) throw ConfigError("sweep overrides must be a list");
    for (const auto& o : *overrides) {
      if (!o.is_object()) throw ConfigError("each sweep override must be an object");
      spec.overrides.push_back(o);
    }
  }
  return spec;
}

namespace {

std::vector<std::string> override_keys(const std::vector<SweepRow>& rows) {
  std::set<std::string> keys;
  for (const auto& r : rows) {
    for (const auto& item : r.overrides.items()) keys.insert(item.key());
  }
  return {keys.begin(), keys.end()};
}

std::string value_field(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return csv_field(v.get<std::string>());
  if (v.is_number_float()) return format_double(v.get<double>());
  return csv_field(v.dump());
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir,
                                std::ostream* progress) {
  std::filesystem::create_directories(out_dir);
  std::vector<SweepRow> rows;
  std::map<std::string, LoadedData> cache;
  for (std::size_t i = 0; i < spec.overrides.size(); ++i) {
    SweepRow row;
    row.run = i;
    row.overrides = spec.overrides[i];
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    const auto run_dir = out_dir / name;
    try {
      json doc = spec.base;
      for (const auto& item : row.overrides.items()) apply_override(doc, item.key(), item.value());
      ExperimentConfig config = config_from_json(doc);
      config.output_dir = run_dir.string();
      const std::string data_key = to_json(config)["dataset"].dump();
      auto it = cache.find(data_key);
      if (it == cache.end()) it = cache.emplace(data_key, load_data(config.dataset)).first;
      const PartitionPlan plan = make_plan(config, *it->second.train);
      std::filesystem::create_directories(run_dir);
      write_file(run_dir / "plan.json", to_json(plan).dump() + "\n");
      if (progress != nullptr) *progress << name << " " << row.overrides.dump() << '\n';
      const ExperimentResult r = run_experiment(config, plan, it->second, run_dir, nullptr);
      row.ok = true;
      row.final_accuracy = r.final_accuracy;
      row.best_accuracy = r.best_accuracy;
    } catch (const std::exception& e) {
      row.error = e.what();
      if (progress != nullptr) *progress << name << " failed: " << row.error << '\n';
    }
    rows.push_back(std::move(row));
  }

  const auto keys = override_keys(rows);
  std::stable_sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) {
    for (const auto& k : keys) {
      const json va = a.overrides.value(k, json(nullptr));
      const json vb = b.overrides.value(k, json(nullptr));
      if (va < vb) return true;
      if (vb < va) return false;
    }
    return false;
  });
  write_file(out_dir / "aggregate.csv", sweep_csv(rows));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  const auto keys = override_keys(rows);
  std::string out = "run";
  for (const auto& k : keys) out += ',' + csv_field(k);
  out += ",status,final_accuracy,best_accuracy,error\n";
  for (const auto& r : rows) {
    out += std::to_string(r.run);
    for (const auto& k : keys) out += ',' + value_field(r.overrides.value(k, json(nullptr)));
    out += r.ok ? ",ok," : ",failed,";
    if (r.final_accuracy) out += format_double(*r.final_accuracy);
    out += ',';
    if (r.best_accuracy) out += format_double(*r.best_accuracy);
    out += ',' + csv_field(r.error) + '\n';
  }
  return out;
}

json theory_report(const ExperimentConfig& config, const PartitionPlan& plan,
                   const std::shared_ptr<const Dataset>& train,
                   const std::optional<ParamVector>& params) {
  const ClassPriorVector priors = resolve_priors(config, train->num_classes);
  const ArchitectureSpec arch = resolve_architecture(config, *train);
  const ParamVector model = params ? *params : init_model(arch, derive_seed(config.seed, kInitStream));
  if (!(model.arch() == arch)) throw ShapeError("model architecture does not match the config");

  auto clients = label_fraction_split(plan, train, derive_seed(config.partition_seed(), kLabelStream));
  std::sort(clients.begin(), clients.end(),
            [](const auto& a, const auto& b) { return a.id() < b.id(); });

  // Empirical class-conditional distributions of the whole train split.
  const auto n = train->size();
  const auto classes = static_cast<std::size_t>(train->num_classes);
  const auto counts = train->class_counts();
  FiniteDistribution dist;
  dist.class_mass.assign(classes, std::vector<double>(n, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    const auto y = static_cast<std::size_t>(train->labels[x]);
    dist.class_mass[y][x] = 1.0 / static_cast<double>(counts[y]);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw ConfigError("class " + std::to_string(c) + " has no training samples");
  }
  ClassifierTable table(n);
  constexpr std::size_t kChunk = 2000;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const auto len = std::min(kChunk, n - begin);
    const BatchOutput out = forward(model, train->features.middleRows(
                                               static_cast<Eigen::Index>(begin),
                                               static_cast<Eigen::Index>(len)));
    for (std::size_t r = 0; r < len; ++r) {
      const auto row = out.probs.row(static_cast<Eigen::Index>(r));
      table[begin + r].assign(row.data(), row.data() + row.size());
    }
  }
  const SurrogateSpec spec{surrogate_kind_from_string(config.method.surrogate), false};

  json report;
  report["name"] = config.name;
  report["config_hash"] = config_hash(config);
  report["delta"] = config.theory.delta;
  report["v"] = config.theory.v;
  report["classifier"] = params ? "params" : "initial";
  report["surrogate"] = config.method.surrogate;
  json client_docs = json::array();
  std::vector<BoundInputs> inputs;
  for (const auto& client : clients) {
    BoundInputs in;
    in.client_index = client.id() + 1;
    in.num_classes = train->num_classes;
    in.positive_classes.assign(client.positive_classes().begin(), client.positive_classes().end());
    for (int c : in.positive_classes) {
      in.labeled_counts.push_back(static_cast<double>(client.labeled_counts()[static_cast<std::size_t>(c)]));
    }
    in.unlabeled_count = static_cast<double>(client.unlabeled_count());
    in.priors.assign(priors.values().begin(), priors.values().end());
    in.v = config.theory.v;
    in.delta = config.theory.delta;
    in.validate();

    const auto negatives = in.negative_classes();
    const Lemma3Coefficient coef = lemma3_coefficient(in.client_index, negatives);
    std::vector<double> sums(in.positive_classes.size(), 0.0);
    for (const auto& s : client.labeled()) {
      const auto pos = static_cast<std::size_t>(
          std::find(in.positive_classes.begin(), in.positive_classes.end(), s.label) -
          in.positive_classes.begin());
      for (int m : negatives) sums[pos] += coef.coefficient * surrogate_neq(table[s.row], m, spec);
    }

    json doc;
    doc["client"] = client.id();
    doc["index"] = in.client_index;
    doc["positive_classes"] = in.positive_classes;
    doc["labeled_counts"] = in.labeled_counts;
    doc["unlabeled_count"] = in.unlabeled_count;
    json t1 = json::array(), t2 = json::array();
    for (int c : in.positive_classes) {
      t1.push_back({{"class", c}, {"bound", bound_theorem1(in, c)}});
      t2.push_back({{"class", c}, {"bound", bound_theorem2(in, c)}});
    }
    doc["theorem1"] = std::move(t1);
    doc["theorem2"] = std::move(t2);
    doc["empirical_sums"] = sums;
    doc["theorem4"] = bound_theorem4(in, sums);
    doc["lemma3"] = to_json(lemma3_audit(dist, table, priors, in.positive_classes, in.client_index, spec));
    client_docs.push_back(std::move(doc));
    inputs.push_back(std::move(in));
  }
  report["clients"] = std::move(client_docs);
  report["theorem5"] = to_json(bound_order_theorem5(inputs));
  return report;
}

}  // namespace fedpu
