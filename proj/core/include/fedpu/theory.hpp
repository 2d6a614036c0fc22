#pragma once

#include <array>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpu/dataset.hpp"
#include "fedpu/population.hpp"
#include "fedpu/surrogate.hpp"

namespace fedpu {

// Sample counts and constants of one client. Counts are real-valued so the
// calculators can be probed at large n; all must be >= 1.
struct BoundInputs {
  int client_index = 1;               // k, 1-based
  int num_classes = 0;                // C
  std::vector<int> positive_classes;  // 0-based class ids
  std::vector<double> labeled_counts; // n_s^k, aligned with positive_classes
  double unlabeled_count = 1.0;       // n_U^k
  std::vector<double> priors;         // pi over all C classes
  double v = 1.0;
  double delta = 0.05;

  void validate() const;  // throws ConfigError
  std::vector<int> negative_classes() const;
  double count_of(int class_id) const;
  // sum_{s in P} 1/sqrt(n_s) + 1/sqrt(n_U)
  double inverse_root_sum() const;
  double confidence_radical(double n) const;  // sqrt(log(1/delta) / (2n))
};

// 2CV (sum_s 1/sqrt(n_s) + 1/sqrt(n_U)) + sqrt(log(1/delta) / (2 n_i)).
double bound_theorem1(const BoundInputs& in, int class_id);
// Same with leading coefficient CV.
double bound_theorem2(const BoundInputs& in, int class_id);

struct Lemma3Coefficient {
  double coefficient = 0.0;  // k^{C_U} / (k^{C_U} + prod |k - i|)
  double companion = 0.0;    // prod |k - i| / k^{C_U}
  double product = 0.0;
  int unlabeled_classes = 0;
  bool zero_product = false;    // some negative class index equals k
  bool empty_negatives = false;
};

// negative_classes are 0-based ids, shifted to 1-based inside the formula.
Lemma3Coefficient lemma3_coefficient(int client_index, std::span<const int> negative_classes);

struct Lemma3Audit {
  Lemma3Coefficient coefficient;
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;  // lhs - rhs
  std::array<double, 3> lhs_paths{};
  std::array<double, 3> rhs_paths{};
  double path_disagreement = 0.0;  // max spread over the three paths, lhs or rhs
};

// Exact enumeration of both sides of the decomposition of the unlabeled
// negative-class risk on a finite distribution. Reports, never asserts.
Lemma3Audit lemma3_audit(const FiniteDistribution& dist, const ClassifierTable& table,
                         const ClassPriorVector& priors, std::span<const int> positive_classes,
                         int client_index, const SurrogateSpec& spec = {});

// Right-hand side of the client bound; empirical_sums[s] is
// sum_j sum_{m in N} P'(f(x_j) != m) over the labeled samples of positive class s
// (aligned with in.positive_classes).
double bound_theorem4(const BoundInputs& in, std::span<const double> empirical_sums);

struct OrderReport {
  double fedpu_order = 0.0;
  double supervised_fed_order = 0.0;
  double supervised_central_order = 0.0;
  double ratio_fed = 0.0;        // fedpu / supervised_fed
  double ratio_central = 0.0;    // fedpu / supervised_central
  double factor_fed = 0.0;       // C sqrt(C)
  double factor_central = 0.0;   // CK sqrt(CK)
};

OrderReport bound_order_theorem5(std::span<const BoundInputs> clients);

nlohmann::json to_json(const Lemma3Coefficient& c);
nlohmann::json to_json(const Lemma3Audit& audit);
nlohmann::json to_json(const OrderReport& report);

}  // namespace fedpu
