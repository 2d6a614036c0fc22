#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpu/dataset.hpp"
#include "fedpu/model.hpp"
#include "fedpu/optimizer.hpp"
#include "fedpu/partition.hpp"
#include "fedpu/risk.hpp"

namespace fedpu {

enum class LossKind { kFedPu, kPositiveOnly, kSupervised, kSingleNegativePu };
enum class AggregationRule { kFedAvg, kFedSgd, kFedProx };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);
std::string to_string(AggregationRule rule);
AggregationRule aggregation_rule_from_string(const std::string& name);

struct ClientRunConfig {
  int local_epochs = 1;
  std::size_t batch_size = 100;
  std::size_t max_batches_per_epoch = 0;  // 0: one full pass per epoch
  LossKind loss = LossKind::kFedPu;
  SurrogateSpec surrogate;
  SupervisedForm supervised_form = SupervisedForm::kPriorWeightedSurrogate;
  double momentum = 0.5;
  double prox_mu = 0.0;
  std::uint64_t seed = 0;
};

struct ClientUpdateResult {
  int client_id = 0;
  ParamVector params;
  RiskBreakdown mean_breakdown;  // averaged over the batches of this update
  std::size_t samples = 0;       // n^k used as the aggregation weight
  std::size_t batches = 0;
  int epochs = 0;
};

// Local training on one client, starting from a fresh optimizer state.
// Every epoch is one pass over the client's samples: ceil(n / B) batches, the
// labeled and unlabeled streams each split evenly across them. Labeled samples
// are interleaved by class so every positive class appears in each batch while
// it has samples left. Throws NumericError naming client and batch on a
// non-finite loss.
ClientUpdateResult client_update(const ParamVector& global, const ClientDataset& client,
                                 const ClientRunConfig& config, const ClassPriorVector& priors,
                                 const CrossClientTermTable& table, double learning_rate);

// client_update with the local objective augmented by (mu/2) ||w - w_t||^2.
ClientUpdateResult fedprox_client_update(const ParamVector& global, const ClientDataset& client,
                                         ClientRunConfig config, const ClassPriorVector& priors,
                                         const CrossClientTermTable& table, double learning_rate,
                                         double mu);

struct WeightedParams {
  int client_id = 0;
  ParamVector params;
  std::size_t samples = 0;
};

// sum_k (n^k / n) w^k, accumulated in ascending client-id order.
ParamVector fedavg_aggregate(std::span<const WeightedParams> updates);

// Loss and gradient of a client's configured objective over its whole local
// dataset at `params` (no optimizer step).
struct FullBatchGradient {
  Eigen::VectorXd gradient;
  RiskBreakdown breakdown;
  std::size_t samples = 0;
};

FullBatchGradient full_batch_gradient(const ParamVector& params, const ClientDataset& client,
                                      const ClientRunConfig& config,
                                      const ClassPriorVector& priors,
                                      const CrossClientTermTable& table);

// w_{t+1} = w_t - lr * sum_k (n^k / n) grad L_k(w_t).
ParamVector fedsgd_round(const ParamVector& global, std::span<const ClientDataset> clients,
                         std::span<const CrossClientTermTable> tables,
                         const ClassPriorVector& priors, const ClientRunConfig& config,
                         double learning_rate);

// Local epochs for each client (in the order of client_ids) in one round:
// local_epochs for regular clients, a reduced count in 1..I-1 for stragglers,
// 0 (dropped) for stragglers when I == 1.
std::vector<int> straggler_schedule(std::span<const int> client_ids, double fraction,
                                    int local_epochs, std::uint64_t seed, int round);

struct ClientRoundLog {
  int client_id = 0;
  RiskBreakdown breakdown;
  std::size_t samples = 0;
  int epochs = 0;
};

struct RoundLog {
  int round = 0;  // 1-based
  std::vector<ClientRoundLog> clients;
  std::optional<double> accuracy;
  double learning_rate = 0.0;
  double wall_ms = 0.0;

  double mean_total() const;
  double mean_term_pos() const;
  double mean_term_unl() const;
  double mean_term_cross() const;
  std::size_t total_samples() const;
};

nlohmann::json to_json(const RoundLog& log);

struct TrainingConfig {
  int rounds = 200;
  AggregationRule aggregation = AggregationRule::kFedAvg;
  double prox_mu = 0.0;
  double straggler_fraction = 0.0;
  LearningRateSchedule schedule;
  ClientRunConfig client;  // seed is replaced per client and round
  std::uint64_t seed = 0;
  int eval_stride = 1;     // 0 disables evaluation
  int threads = 1;
  std::function<void(const RoundLog&, const ParamVector&)> on_round;
};

struct TrainingResult {
  ParamVector params;
  std::vector<RoundLog> logs;
};

// tables must hold one entry per client id (order irrelevant). `test` may be
// null when eval_stride is 0.
TrainingResult run_training(const TrainingConfig& config, const ParamVector& initial,
                            std::span<const ClientDataset> clients,
                            std::span<const CrossClientTermTable> tables,
                            const ClassPriorVector& priors, const Dataset* test);

// Top-1 accuracy; ties go to the lowest class index. Throws on an empty set.
double evaluate(const ParamVector& params, const Dataset& test);

}  // namespace fedpu
