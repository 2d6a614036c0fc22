#pragma once

#include <span>
#include <vector>

#include "fedpu/dataset.hpp"
#include "fedpu/risk.hpp"
#include "fedpu/surrogate.hpp"

namespace fedpu {

// A distribution over a finite support {0..points-1}: class_mass[c][x] is the
// probability of support point x under class c. Each row sums to 1.
struct FiniteDistribution {
  std::vector<std::vector<double>> class_mass;

  int num_classes() const { return static_cast<int>(class_mass.size()); }
  std::size_t num_points() const { return class_mass.empty() ? 0 : class_mass.front().size(); }
  void validate() const;  // throws ConfigError if a class row is not normalised
};

// probs[x] is the fixed classifier's softmax row at support point x.
using ClassifierTable = std::vector<std::vector<double>>;

// sum_i pi_i sum_x mass_i(x) l(x, i), by full enumeration.
double population_supervised_risk(const FiniteDistribution& dist, const ClassifierTable& table,
                                  const ClassPriorVector& priors, const SurrogateSpec& spec);

struct PopulationFedPuRisk {
  std::vector<double> per_client;  // in the order of positive_sets
  double global_sum = 0.0;
};

// Client risks with every empirical mean replaced by its expectation; every
// client shares the per-class distributions, unlabeled marginal sum_c pi_c P_c.
PopulationFedPuRisk population_fedpu_risk(const FiniteDistribution& dist,
                                          const ClassifierTable& table,
                                          const ClassPriorVector& priors,
                                          std::span<const ClientPositiveSet> positive_sets,
                                          TableMode mode, const SurrogateSpec& spec);

}  // namespace fedpu
