#include "fedpu/population.hpp"

#include <cmath>

#include "fedpu/error.hpp"

namespace fedpu {

namespace {

void check_inputs(const FiniteDistribution& dist, const ClassifierTable& table,
                  const ClassPriorVector& priors) {
  dist.validate();
  if (static_cast<std::size_t>(dist.num_classes()) != priors.size()) {
    throw ConfigError("distribution and priors disagree on the class count");
  }
  if (table.size() != dist.num_points()) {
    throw ConfigError("classifier table needs one row per support point");
  }
  for (const auto& row : table) {
    if (row.size() != priors.size()) throw ConfigError("classifier row has the wrong width");
  }
}

// E_c[l(x, m)]
double class_expectation(const FiniteDistribution& dist, const ClassifierTable& table, int c,
                         int m, SurrogateKind kind) {
  double total = 0.0;
  const auto& mass = dist.class_mass[static_cast<std::size_t>(c)];
  for (std::size_t x = 0; x < mass.size(); ++x) {
    total += mass[x] * surrogate_value(table[x][static_cast<std::size_t>(m)], kind);
  }
  return total;
}

}  // namespace

void FiniteDistribution::validate() const {
  if (class_mass.empty()) throw ConfigError("distribution has no classes");
  const std::size_t points = num_points();
  for (std::size_t c = 0; c < class_mass.size(); ++c) {
    if (class_mass[c].size() != points) throw ConfigError("ragged class mass table");
    double sum = 0.0;
    for (double m : class_mass[c]) {
      if (m < 0.0) throw ConfigError("negative probability mass");
      sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("class " + std::to_string(c) + " masses sum to " + std::to_string(sum));
    }
  }
}

double population_supervised_risk(const FiniteDistribution& dist, const ClassifierTable& table,
                                  const ClassPriorVector& priors, const SurrogateSpec& spec) {
  check_inputs(dist, table, priors);
  double risk = 0.0;
  for (int c = 0; c < dist.num_classes(); ++c) {
    risk += priors[static_cast<std::size_t>(c)] * class_expectation(dist, table, c, c, spec.kind);
  }
  return risk;
}

PopulationFedPuRisk population_fedpu_risk(const FiniteDistribution& dist,
                                          const ClassifierTable& table,
                                          const ClassPriorVector& priors,
                                          std::span<const ClientPositiveSet> positive_sets,
                                          TableMode mode, const SurrogateSpec& spec) {
  check_inputs(dist, table, priors);
  const int classes = dist.num_classes();
  const auto tables = build_cross_client_tables(positive_sets, classes, mode);

  // expect[c][m] = E_c[l(x, m)]
  std::vector<std::vector<double>> expect(static_cast<std::size_t>(classes),
                                          std::vector<double>(static_cast<std::size_t>(classes)));
  for (int c = 0; c < classes; ++c) {
    for (int m = 0; m < classes; ++m) {
      expect[static_cast<std::size_t>(c)][static_cast<std::size_t>(m)] =
          class_expectation(dist, table, c, m, spec.kind);
    }
  }

  PopulationFedPuRisk out;
  for (const auto& set : positive_sets) {
    std::vector<char> positive(static_cast<std::size_t>(classes), 0);
    for (int c : set.classes) positive[static_cast<std::size_t>(c)] = 1;

    double term_pos = 0.0;
    for (int i : set.classes) {
      const auto iu = static_cast<std::size_t>(i);
      double neg = 0.0;
      for (int m = 0; m < classes; ++m) {
        if (!positive[static_cast<std::size_t>(m)]) neg += expect[iu][static_cast<std::size_t>(m)];
      }
      term_pos += priors[iu] * (expect[iu][iu] - neg);
    }

    // E_U[l(x,m)] = sum_c pi_c E_c[l(x,m)]
    double term_unl = 0.0;
    for (int m = 0; m < classes; ++m) {
      if (positive[static_cast<std::size_t>(m)]) continue;
      for (int c = 0; c < classes; ++c) {
        term_unl += priors[static_cast<std::size_t>(c)] *
                    expect[static_cast<std::size_t>(c)][static_cast<std::size_t>(m)];
      }
    }

    const CrossClientTermTable* row = nullptr;
    for (const auto& t : tables) {
      if (t.client_id == set.client_id) row = &t;
    }
    double term_cross = 0.0;
    for (const auto& e : row->entries) {
      const auto iu = static_cast<std::size_t>(e.positive_class);
      term_cross += e.weight * priors[iu] * expect[iu][static_cast<std::size_t>(e.other_class)];
    }

    const double risk = term_pos + term_unl - term_cross;
    out.per_client.push_back(risk);
    out.global_sum += risk;
  }
  return out;
}

}  // namespace fedpu
