#include "fedpu/fedsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "fedpu/error.hpp"
#include "fedpu/rng.hpp"

namespace fedpu {

namespace {

bool uses_unlabeled(LossKind kind) {
  return kind == LossKind::kFedPu || kind == LossKind::kSingleNegativePu;
}

// Labeled samples grouped by class, each group shuffled, then dealt
// round-robin across classes.
std::vector<LabeledSample> interleaved_labeled(const ClientDataset& client, Rng& rng) {
  std::vector<std::vector<LabeledSample>> groups(static_cast<std::size_t>(client.num_classes()));
  for (const auto& s : client.labeled()) groups[static_cast<std::size_t>(s.label)].push_back(s);
  for (auto& g : groups) {
    std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return a.row < b.row; });
    rng.shuffle(std::span(g));
  }
  std::vector<LabeledSample> out;
  out.reserve(client.labeled_count());
  for (std::size_t round = 0; out.size() < client.labeled_count(); ++round) {
    for (const auto& g : groups) {
      if (round < g.size()) out.push_back(g[round]);
    }
  }
  return out;
}

struct BatchEvaluation {
  LossResult loss;
  ParamVector grad;
};

BatchEvaluation evaluate_batch(const ParamVector& params, const ClientDataset& client,
                               std::span<const LabeledSample> labeled,
                               std::span<const std::size_t> unlabeled,
                               const ClientRunConfig& config, const ClassPriorVector& priors,
                               const CrossClientTermTable& table) {
  const Dataset& ds = client.source();
  const auto n_lab = static_cast<Eigen::Index>(labeled.size());
  const auto n_unl = static_cast<Eigen::Index>(unlabeled.size());
  RowMatrix batch(n_lab + n_unl, ds.features.cols());
  std::vector<int> labels;
  labels.reserve(labeled.size());
  for (Eigen::Index r = 0; r < n_lab; ++r) {
    const auto& s = labeled[static_cast<std::size_t>(r)];
    batch.row(r) = ds.features.row(static_cast<Eigen::Index>(s.row));
    labels.push_back(s.label);
  }
  for (Eigen::Index r = 0; r < n_unl; ++r) {
    batch.row(n_lab + r) =
        ds.features.row(static_cast<Eigen::Index>(unlabeled[static_cast<std::size_t>(r)]));
  }

  const BatchOutput out = forward(params, batch);
  const auto lab_probs = out.probs.topRows(n_lab);
  const auto unl_probs = out.probs.bottomRows(n_unl);

  LossResult loss;
  switch (config.loss) {
    case LossKind::kFedPu:
      loss = fedpu_client_loss(lab_probs, labels, unl_probs, priors, client.positive_classes(),
                               table, config.surrogate);
      break;
    case LossKind::kSingleNegativePu:
      loss = single_negative_pu_loss(lab_probs, labels, unl_probs, priors,
                                     client.positive_classes(), config.surrogate);
      break;
    case LossKind::kPositiveOnly:
      loss = positive_only_loss(lab_probs, labels, priors, config.supervised_form,
                                config.surrogate);
      break;
    case LossKind::kSupervised:
      loss = supervised_loss(lab_probs, labels, priors, config.supervised_form, config.surrogate);
      break;
  }

  RowMatrix upstream(n_lab + n_unl, out.probs.cols());
  upstream.topRows(n_lab) = loss.grad_labeled;
  if (n_unl > 0) {
    if (loss.grad_unlabeled.rows() == n_unl) {
      upstream.bottomRows(n_unl) = loss.grad_unlabeled;
    } else {
      upstream.bottomRows(n_unl).setZero();
    }
  }
  ParamVector grad = backward(params, out, upstream);
  return {std::move(loss), std::move(grad)};
}

void accumulate(RiskBreakdown& into, const RiskBreakdown& b) {
  into.term_pos += b.term_pos;
  into.term_unl += b.term_unl;
  into.term_cross += b.term_cross;
  into.total += b.total;
  into.clamped = into.clamped || b.clamped;
}

void scale(RiskBreakdown& b, double factor) {
  b.term_pos *= factor;
  b.term_unl *= factor;
  b.term_cross *= factor;
  b.total *= factor;
}

const CrossClientTermTable& table_for(const std::map<int, const CrossClientTermTable*>& tables,
                                      int client_id) {
  const auto it = tables.find(client_id);
  if (it == tables.end()) {
    throw ConfigError("no cross-client table for client " + std::to_string(client_id));
  }
  return *it->second;
}

std::map<int, const CrossClientTermTable*> index_tables(
    std::span<const CrossClientTermTable> tables) {
  std::map<int, const CrossClientTermTable*> out;
  for (const auto& t : tables) out[t.client_id] = &t;
  return out;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kFedPu: return "fedpu";
    case LossKind::kPositiveOnly: return "positive_only";
    case LossKind::kSupervised: return "supervised";
    case LossKind::kSingleNegativePu: return "single_negative_pu";
  }
  return "";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "fedpu") return LossKind::kFedPu;
  if (name == "positive_only") return LossKind::kPositiveOnly;
  if (name == "supervised") return LossKind::kSupervised;
  if (name == "single_negative_pu") return LossKind::kSingleNegativePu;
  throw ConfigError("unknown loss kind '" + name + "'");
}

std::string to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::kFedAvg: return "fedavg";
    case AggregationRule::kFedSgd: return "fedsgd";
    case AggregationRule::kFedProx: return "fedprox";
  }
  return "";
}

AggregationRule aggregation_rule_from_string(const std::string& name) {
  if (name == "fedavg") return AggregationRule::kFedAvg;
  if (name == "fedsgd") return AggregationRule::kFedSgd;
  if (name == "fedprox") return AggregationRule::kFedProx;
  throw ConfigError("unknown aggregation rule '" + name + "'");
}

ClientUpdateResult client_update(const ParamVector& global, const ClientDataset& client,
                                 const ClientRunConfig& config, const ClassPriorVector& priors,
                                 const CrossClientTermTable& table, double learning_rate) {
  if (!global.all_finite()) throw NumericError("client_update received non-finite weights");
  if (config.local_epochs < 0 || config.batch_size < 1) {
    throw ConfigError("client config needs local_epochs >= 0 and batch_size >= 1");
  }
  const bool with_unlabeled = uses_unlabeled(config.loss);
  const std::size_t n_lab = client.labeled_count();
  const std::size_t n_unl = with_unlabeled ? client.unlabeled_count() : 0;
  const std::size_t n = n_lab + n_unl;
  if (n == 0) {
    throw ConfigError("client " + std::to_string(client.id()) + " has no training samples");
  }

  ClientUpdateResult result{client.id(), global, {}, n, 0, config.local_epochs};
  ParamVector& params = result.params;
  OptimizerState state = make_optimizer_state(params, learning_rate, config.momentum);
  Rng rng(config.seed);

  std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t planned = batches;
  if (config.max_batches_per_epoch > 0) batches = std::min(batches, config.max_batches_per_epoch);

  std::vector<std::size_t> unlabeled;
  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    const auto labeled = interleaved_labeled(client, rng);
    unlabeled.clear();
    if (with_unlabeled) {
      unlabeled.assign(client.unlabeled().begin(), client.unlabeled().end());
      std::sort(unlabeled.begin(), unlabeled.end());
      rng.shuffle(std::span(unlabeled));
    }
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t l0 = b * n_lab / planned, l1 = (b + 1) * n_lab / planned;
      const std::size_t u0 = b * n_unl / planned, u1 = (b + 1) * n_unl / planned;
      if (l0 == l1 && u0 == u1) continue;
      if (config.loss == LossKind::kPositiveOnly || config.loss == LossKind::kSupervised) {
        if (l0 == l1) continue;
      }
      auto eval = evaluate_batch(params, client, std::span(labeled).subspan(l0, l1 - l0),
                                 std::span(unlabeled).subspan(u0, u1 - u0), config, priors, table);
      if (!std::isfinite(eval.loss.breakdown.total)) {
        throw NumericError("non-finite loss on client " + std::to_string(client.id()) +
                           ", epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      Eigen::VectorXd& grad = eval.grad.values();
      if (config.prox_mu != 0.0) grad += config.prox_mu * (params.values() - global.values());
      apply_sgd_momentum(params, grad, state);
      accumulate(result.mean_breakdown, eval.loss.breakdown);
      ++result.batches;
    }
  }
  if (result.batches > 0) scale(result.mean_breakdown, 1.0 / static_cast<double>(result.batches));
  return result;
}

ClientUpdateResult fedprox_client_update(const ParamVector& global, const ClientDataset& client,
                                         ClientRunConfig config, const ClassPriorVector& priors,
                                         const CrossClientTermTable& table, double learning_rate,
                                         double mu) {
  if (!(mu >= 0.0)) throw ConfigError("FedProx mu must be >= 0");
  config.prox_mu = mu;
  return client_update(global, client, config, priors, table, learning_rate);
}

ParamVector fedavg_aggregate(std::span<const WeightedParams> updates) {
  if (updates.empty()) throw ConfigError("no participating clients to aggregate");
  std::vector<const WeightedParams*> order;
  for (const auto& u : updates) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->client_id < b->client_id; });

  std::size_t total = 0;
  for (const auto* u : order) {
    if (!(u->params.arch() == order.front()->params.arch())) {
      throw ShapeError("aggregating parameter vectors of different architectures");
    }
    total += u->samples;
  }
  if (total == 0) throw ConfigError("aggregation weights sum to zero");

  ParamVector out(order.front()->params.arch());
  for (const auto* u : order) {
    const double weight = static_cast<double>(u->samples) / static_cast<double>(total);
    out.values() += weight * u->params.values();
  }
  return out;
}

FullBatchGradient full_batch_gradient(const ParamVector& params, const ClientDataset& client,
                                      const ClientRunConfig& config,
                                      const ClassPriorVector& priors,
                                      const CrossClientTermTable& table) {
  const bool with_unlabeled = uses_unlabeled(config.loss);
  std::span<const std::size_t> unlabeled =
      with_unlabeled ? client.unlabeled() : std::span<const std::size_t>{};
  auto eval = evaluate_batch(params, client, client.labeled(), unlabeled, config, priors, table);
  if (!std::isfinite(eval.loss.breakdown.total)) {
    throw NumericError("non-finite full-batch loss on client " + std::to_string(client.id()));
  }
  return {std::move(eval.grad.values()), eval.loss.breakdown,
          client.labeled_count() + unlabeled.size()};
}

namespace {

struct FedSgdStep {
  ParamVector params;
  std::vector<ClientRoundLog> logs;
};

FedSgdStep fedsgd_step(const ParamVector& global, std::span<const ClientDataset> clients,
                       const std::map<int, const CrossClientTermTable*>& tables,
                       const ClassPriorVector& priors, const ClientRunConfig& config,
                       double learning_rate) {
  std::vector<std::pair<int, FullBatchGradient>> grads;
  for (const auto& client : clients) {
    grads.emplace_back(client.id(), full_batch_gradient(global, client, config, priors,
                                                        table_for(tables, client.id())));
  }
  std::stable_sort(grads.begin(), grads.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t total = 0;
  for (const auto& g : grads) total += g.second.samples;
  if (total == 0) throw ConfigError("no participating clients to aggregate");

  Eigen::VectorXd combined = Eigen::VectorXd::Zero(global.values().size());
  FedSgdStep out{global, {}};
  for (const auto& [id, g] : grads) {
    combined += (static_cast<double>(g.samples) / static_cast<double>(total)) * g.gradient;
    out.logs.push_back({id, g.breakdown, g.samples, 0});
  }
  out.params.values() -= learning_rate * combined;
  return out;
}

}  // namespace

ParamVector fedsgd_round(const ParamVector& global, std::span<const ClientDataset> clients,
                         std::span<const CrossClientTermTable> tables,
                         const ClassPriorVector& priors, const ClientRunConfig& config,
                         double learning_rate) {
  return fedsgd_step(global, clients, index_tables(tables), priors, config, learning_rate).params;
}

std::vector<int> straggler_schedule(std::span<const int> client_ids, double fraction,
                                    int local_epochs, std::uint64_t seed, int round) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("straggler fraction must lie in [0,1]");
  }
  const std::size_t k_count = client_ids.size();
  std::vector<int> epochs(k_count, local_epochs);
  const auto stragglers =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(k_count)));
  if (stragglers == 0) return epochs;

  // Sort positions by client id so the draw does not depend on list order.
  std::vector<std::size_t> by_id(k_count);
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::stable_sort(by_id.begin(), by_id.end(),
                   [&](std::size_t a, std::size_t b) { return client_ids[a] < client_ids[b]; });
  Rng rng(derive_seed(seed, 0x5354524147ULL, static_cast<std::uint64_t>(round)));
  rng.shuffle(std::span(by_id));
  for (std::size_t s = 0; s < stragglers; ++s) {
    epochs[by_id[s]] =
        local_epochs <= 1 ? 0
                          : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(local_epochs - 1)));
  }
  return epochs;
}

double RoundLog::mean_total() const {
  double s = 0.0;
  for (const auto& c : clients) s += c.breakdown.total;
  return clients.empty() ? 0.0 : s / static_cast<double>(clients.size());
}

double RoundLog::mean_term_pos() const {
  double s = 0.0;
  for (const auto& c : clients) s += c.breakdown.term_pos;
  return clients.empty() ? 0.0 : s / static_cast<double>(clients.size());
}

double RoundLog::mean_term_unl() const {
  double s = 0.0;
  for (const auto& c : clients) s += c.breakdown.term_unl;
  return clients.empty() ? 0.0 : s / static_cast<double>(clients.size());
}

double RoundLog::mean_term_cross() const {
  double s = 0.0;
  for (const auto& c : clients) s += c.breakdown.term_cross;
  return clients.empty() ? 0.0 : s / static_cast<double>(clients.size());
}

std::size_t RoundLog::total_samples() const {
  std::size_t s = 0;
  for (const auto& c : clients) s += c.samples;
  return s;
}

nlohmann::json to_json(const RoundLog& log) {
  nlohmann::json doc;
  doc["round"] = log.round;
  doc["accuracy"] = log.accuracy ? nlohmann::json(*log.accuracy) : nlohmann::json(nullptr);
  doc["lr"] = log.learning_rate;
  doc["ms"] = log.wall_ms;
  doc["samples"] = log.total_samples();
  auto& clients = doc["clients"] = nlohmann::json::array();
  for (const auto& c : log.clients) {
    auto row = to_json(c.breakdown, c.client_id);
    row["samples"] = c.samples;
    row["epochs"] = c.epochs;
    clients.push_back(std::move(row));
  }
  return doc;
}

TrainingResult run_training(const TrainingConfig& config, const ParamVector& initial,
                            std::span<const ClientDataset> clients,
                            std::span<const CrossClientTermTable> tables,
                            const ClassPriorVector& priors, const Dataset* test) {
  if (config.rounds < 0) throw ConfigError("rounds must be >= 0");
  if (config.eval_stride > 0 && test == nullptr) {
    throw ConfigError("evaluation requested without a test split");
  }
  const auto table_index = index_tables(tables);
  std::vector<int> ids;
  for (const auto& c : clients) ids.push_back(c.id());

  TrainingResult result{initial, {}};
  for (int t = 0; t < config.rounds; ++t) {
    const auto started = std::chrono::steady_clock::now();
    RoundLog log;
    log.round = t + 1;
    log.learning_rate = config.schedule.at(t);

    if (config.aggregation == AggregationRule::kFedSgd) {
      auto step = fedsgd_step(result.params, clients, table_index, priors, config.client,
                              log.learning_rate);
      result.params = std::move(step.params);
      log.clients = std::move(step.logs);
    } else {
      const bool prox = config.aggregation == AggregationRule::kFedProx;
      const auto epochs =
          prox ? straggler_schedule(ids, config.straggler_fraction, config.client.local_epochs,
                                    config.seed, t)
               : std::vector<int>(clients.size(), config.client.local_epochs);

      std::vector<std::optional<ClientUpdateResult>> updates(clients.size());
      auto work = [&](std::size_t k) {
        if (epochs[k] == 0) return;
        ClientRunConfig cc = config.client;
        cc.local_epochs = epochs[k];
        cc.seed = derive_seed(config.seed, static_cast<std::uint64_t>(clients[k].id()),
                              static_cast<std::uint64_t>(t));
        cc.prox_mu = prox ? config.prox_mu : 0.0;
        updates[k] = client_update(result.params, clients[k], cc, priors,
                                   table_for(table_index, clients[k].id()), log.learning_rate);
      };
      const auto threads = static_cast<std::size_t>(std::max(1, config.threads));
      if (threads <= 1 || clients.size() <= 1) {
        for (std::size_t k = 0; k < clients.size(); ++k) work(k);
      } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) {
          pool.emplace_back([&, w] {
            try {
              for (std::size_t k = w; k < clients.size(); k += threads) work(k);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }

      std::vector<WeightedParams> weighted;
      for (auto& u : updates) {
        if (!u) continue;
        log.clients.push_back({u->client_id, u->mean_breakdown, u->samples, u->epochs});
        weighted.push_back({u->client_id, std::move(u->params), u->samples});
      }
      if (weighted.empty()) {
        throw ConfigError("no participating clients in round " + std::to_string(t + 1));
      }
      result.params = fedavg_aggregate(weighted);
      std::sort(log.clients.begin(), log.clients.end(),
                [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
    }
    if (!result.params.all_finite()) {
      throw NumericError("global weights became non-finite in round " + std::to_string(t + 1));
    }

    const bool eval_now = config.eval_stride > 0 &&
                          ((t + 1) % config.eval_stride == 0 || t + 1 == config.rounds);
    if (eval_now) log.accuracy = evaluate(result.params, *test);
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    if (config.on_round) config.on_round(log, result.params);
    result.logs.push_back(std::move(log));
  }
  return result;
}

double evaluate(const ParamVector& params, const Dataset& test) {
  if (test.size() == 0) throw ConfigError("cannot evaluate on an empty test set");
  constexpr Eigen::Index kChunk = 1000;
  std::size_t correct = 0;
  const auto n = static_cast<Eigen::Index>(test.size());
  for (Eigen::Index begin = 0; begin < n; begin += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - begin);
    const BatchOutput out = forward(params, test.features.middleRows(begin, len));
    for (Eigen::Index r = 0; r < len; ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < out.scores.cols(); ++c) {
        if (out.scores(r, c) > out.scores(r, best)) best = c;
      }
      if (best == test.labels[static_cast<std::size_t>(begin + r)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedpu
