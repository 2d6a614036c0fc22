#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fedpu/dataset.hpp"
#include "fedpu/surrogate.hpp"

namespace fedpu {

// How the cross-client correction is weighted when a class is positive in
// several clients. paper_literal counts it once per such client;
// multiplicity_normalized divides by that count so the federated sum of client
// risks equals the federated supervised risk.
enum class TableMode { kPaperLiteral, kMultiplicityNormalized };

std::string to_string(TableMode mode);
TableMode table_mode_from_string(const std::string& name);

struct ClientPositiveSet {
  int client_id = 0;
  std::vector<int> classes;
};

struct CrossClientEntry {
  int source_client = 0;  // k_q
  int positive_class = 0; // i: positive here, negative at k_q
  int other_class = 0;    // m: negative at k_q, m != i
  double weight = 1.0;
};

struct CrossClientTermTable {
  int client_id = 0;
  TableMode mode = TableMode::kMultiplicityNormalized;
  std::vector<CrossClientEntry> entries;

  // Sum of entry weights per (i, m), C x C; entries are folded in source-client order.
  Eigen::MatrixXd weight_matrix(int num_classes) const;
};

// One table per client, returned in ascending client-id order. Throws
// ConfigError if the positive sets do not cover all classes.
std::vector<CrossClientTermTable> build_cross_client_tables(
    std::span<const ClientPositiveSet> positive_sets, int num_classes, TableMode mode);

struct RiskBreakdown {
  double term_pos = 0.0;    // sum_i pi_i mean_i[l(x,i) - sum_{m in N} l(x,m)]
  double term_unl = 0.0;    // mean_U sum_{m in N} l(x,m)
  double term_cross = 0.0;  // sum_entries w pi_i mean_i l(x,m), subtracted
  double total = 0.0;
  bool clamped = false;
  std::vector<double> class_pos;    // per-class share of term_pos
  std::vector<double> class_cross;  // per-class share of term_cross
  std::vector<int> missing_classes; // positive classes absent from the batch
};

nlohmann::json to_json(const RiskBreakdown& breakdown, int client_id);

// Loss value plus dL/dp for the labeled and unlabeled rows. For the FedPU loss
// the per-term gradients are kept as well (labeled: pos, cross; unlabeled: unl).
struct LossResult {
  RiskBreakdown breakdown;
  RowMatrix grad_labeled;
  RowMatrix grad_unlabeled;
  RowMatrix grad_pos;
  RowMatrix grad_cross;
};

using ProbRows = Eigen::Ref<const RowMatrix>;

LossResult fedpu_client_loss(const ProbRows& labeled_probs, std::span<const int> labels,
                             const ProbRows& unlabeled_probs, const ClassPriorVector& priors,
                             std::span<const int> positive_classes,
                             const CrossClientTermTable& table, const SurrogateSpec& spec);

enum class SupervisedForm { kPriorWeightedSurrogate, kCrossEntropy };

std::string to_string(SupervisedForm form);
SupervisedForm supervised_form_from_string(const std::string& name);

// prior-weighted surrogate: sum_i pi_i mean_i l(x,i); cross entropy: mean -log p_y.
LossResult supervised_loss(const ProbRows& probs, std::span<const int> labels,
                           const ClassPriorVector& priors, SupervisedForm form,
                           const SurrogateSpec& spec);

// Supervised loss on the labeled subset only. Throws ConfigError when empty.
LossResult positive_only_loss(const ProbRows& labeled_probs, std::span<const int> labels,
                              const ClassPriorVector& priors, SupervisedForm form,
                              const SurrogateSpec& spec);

// Conventional multi-positive single-negative PU: the negative classes collapse
// into one super-class with probability q(x) = sum_{m in N} p_m(x).
LossResult single_negative_pu_loss(const ProbRows& labeled_probs, std::span<const int> labels,
                                   const ProbRows& unlabeled_probs,
                                   const ClassPriorVector& priors,
                                   std::span<const int> positive_classes,
                                   const SurrogateSpec& spec);

// mean over rows of sum_{m in negatives} l(x,m).
double unlabeled_negative_risk(const ProbRows& probs, std::span<const int> negatives,
                               const SurrogateSpec& spec);

// Expansion of the unlabeled negative-class risk over per-class pools.
struct UnlabeledExpansion {
  double positive_to_negative = 0.0;  // sum_{i in P} sum_{m in N} pi_i mean_i l(x,m)
  double negative_self = 0.0;         // sum_{j in N} pi_j mean_j l(x,j)
  double negative_cross = 0.0;        // sum_{j != m in N} pi_j mean_j l(x,m)
  double sum() const { return positive_to_negative + negative_self + negative_cross; }
};

UnlabeledExpansion expand_unlabeled_risk(std::span<const RowMatrix> class_pools,
                                         const ClassPriorVector& priors,
                                         std::span<const int> negatives,
                                         const SurrogateSpec& spec);

}  // namespace fedpu
