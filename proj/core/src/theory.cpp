#include "fedpu/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedpu/error.hpp"

namespace fedpu {

void BoundInputs::validate() const {
  if (client_index < 1) throw ConfigError("client index must be >= 1");
  if (num_classes < 1) throw ConfigError("bound inputs need at least one class");
  if (positive_classes.size() != labeled_counts.size()) {
    throw ConfigError("labeled counts must align with the positive classes");
  }
  for (int c : positive_classes) {
    if (c < 0 || c >= num_classes) throw ConfigError("positive class out of range");
  }
  for (double n : labeled_counts) {
    if (!(n >= 1.0)) throw ConfigError("every labeled count must be >= 1");
  }
  if (!(unlabeled_count >= 1.0)) throw ConfigError("unlabeled count must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
  if (!(v > 0.0)) throw ConfigError("V must be positive");
  if (!priors.empty() && priors.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("priors must have one entry per class");
  }
}

std::vector<int> BoundInputs::negative_classes() const {
  std::vector<int> out;
  for (int c = 0; c < num_classes; ++c) {
    if (std::find(positive_classes.begin(), positive_classes.end(), c) == positive_classes.end()) {
      out.push_back(c);
    }
  }
  return out;
}

double BoundInputs::count_of(int class_id) const {
  for (std::size_t s = 0; s < positive_classes.size(); ++s) {
    if (positive_classes[s] == class_id) return labeled_counts[s];
  }
  throw ConfigError("class " + std::to_string(class_id) + " is not positive for client " +
                    std::to_string(client_index));
}

double BoundInputs::inverse_root_sum() const {
  double s = 0.0;
  for (double n : labeled_counts) s += 1.0 / std::sqrt(n);
  return s + 1.0 / std::sqrt(unlabeled_count);
}

double BoundInputs::confidence_radical(double n) const {
  return std::sqrt(std::log(1.0 / delta) / (2.0 * n));
}

double bound_theorem1(const BoundInputs& in, int class_id) {
  in.validate();
  const double c = in.num_classes;
  return 2.0 * c * in.v * in.inverse_root_sum() + in.confidence_radical(in.count_of(class_id));
}

double bound_theorem2(const BoundInputs& in, int class_id) {
  in.validate();
  const double c = in.num_classes;
  return c * in.v * in.inverse_root_sum() + in.confidence_radical(in.count_of(class_id));
}

Lemma3Coefficient lemma3_coefficient(int client_index, std::span<const int> negative_classes) {
  if (client_index < 1) throw ConfigError("client index must be >= 1");
  Lemma3Coefficient out;
  out.unlabeled_classes = static_cast<int>(negative_classes.size());
  out.empty_negatives = negative_classes.empty();
  const double k = client_index;
  double product = 1.0;
  for (int c : negative_classes) product *= std::abs(k - static_cast<double>(c + 1));
  const double power = std::pow(k, out.unlabeled_classes);
  out.product = product;
  out.zero_product = product == 0.0;
  out.coefficient = power / (power + product);
  out.companion = product / power;
  return out;
}

Lemma3Audit lemma3_audit(const FiniteDistribution& dist, const ClassifierTable& table,
                         const ClassPriorVector& priors, std::span<const int> positive_classes,
                         int client_index, const SurrogateSpec& spec) {
  dist.validate();
  const int classes = dist.num_classes();
  const std::size_t points = dist.num_points();
  if (table.size() != points) throw ShapeError("classifier table must have one row per point");
  if (priors.size() != static_cast<std::size_t>(classes)) {
    throw ShapeError("priors must have one entry per class");
  }
  std::vector<bool> positive(static_cast<std::size_t>(classes), false);
  for (int c : positive_classes) {
    if (c < 0 || c >= classes) throw ConfigError("positive class out of range");
    positive[static_cast<std::size_t>(c)] = true;
  }
  std::vector<int> negatives;
  for (int c = 0; c < classes; ++c) {
    if (!positive[static_cast<std::size_t>(c)]) negatives.push_back(c);
  }

  Lemma3Audit audit;
  audit.coefficient = lemma3_coefficient(client_index, negatives);
  const double coef = audit.coefficient.coefficient;
  const double companion = audit.coefficient.companion;
  const auto loss = [&](std::size_t x, int m) { return surrogate_neq(table[x], m, spec); };
  const auto mass = [&](int c, std::size_t x) {
    return dist.class_mass[static_cast<std::size_t>(c)][x];
  };
  const auto prior = [&](int c) { return priors[static_cast<std::size_t>(c)]; };

  // Path 1: point by point.
  {
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t x = 0; x < points; ++x) {
      double unl = 0.0, pos = 0.0;
      for (int c = 0; c < classes; ++c) {
        unl += prior(c) * mass(c, x);
        if (positive[static_cast<std::size_t>(c)]) pos += prior(c) * mass(c, x);
      }
      double neg_loss = 0.0;
      for (int m : negatives) neg_loss += loss(x, m);
      lhs += unl * neg_loss;
      rhs += (companion * pos + unl) * coef * neg_loss;
    }
    audit.lhs_paths[0] = lhs;
    audit.rhs_paths[0] = rhs;
  }
  // Path 2: per-class expectations first.
  {
    std::vector<std::vector<double>> expect(static_cast<std::size_t>(classes),
                                            std::vector<double>(static_cast<std::size_t>(classes), 0.0));
    for (int c = 0; c < classes; ++c) {
      for (int m = 0; m < classes; ++m) {
        double e = 0.0;
        for (std::size_t x = 0; x < points; ++x) e += mass(c, x) * loss(x, m);
        expect[static_cast<std::size_t>(c)][static_cast<std::size_t>(m)] = e;
      }
    }
    double lhs = 0.0, labeled_part = 0.0, unlabeled_part = 0.0;
    for (int m : negatives) {
      double e_unl = 0.0;
      for (int c = 0; c < classes; ++c) {
        e_unl += prior(c) * expect[static_cast<std::size_t>(c)][static_cast<std::size_t>(m)];
      }
      lhs += e_unl;
      unlabeled_part += coef * e_unl;
    }
    for (int i : positive_classes) {
      double s = 0.0;
      for (int m : negatives) s += coef * expect[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
      labeled_part += prior(i) * companion * s;
    }
    audit.lhs_paths[1] = lhs;
    audit.rhs_paths[1] = labeled_part + unlabeled_part;
  }
  // Path 3: brute force over (m, y, x) triples.
  {
    double lhs = 0.0, rhs = 0.0;
    for (int m : negatives) {
      for (int y = 0; y < classes; ++y) {
        for (std::size_t x = 0; x < points; ++x) {
          const double w = prior(y) * mass(y, x);
          const double l = loss(x, m);
          lhs += w * l;
          rhs += w * coef * l;
          if (positive[static_cast<std::size_t>(y)]) rhs += w * companion * coef * l;
        }
      }
    }
    audit.lhs_paths[2] = lhs;
    audit.rhs_paths[2] = rhs;
  }

  const auto spread = [](const std::array<double, 3>& v) {
    return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
  };
  audit.path_disagreement = std::max(spread(audit.lhs_paths), spread(audit.rhs_paths));
  audit.lhs = audit.lhs_paths[1];
  audit.rhs = audit.rhs_paths[1];
  audit.gap = audit.lhs - audit.rhs;
  return audit;
}

double bound_theorem4(const BoundInputs& in, std::span<const double> empirical_sums) {
  in.validate();
  if (empirical_sums.size() != in.positive_classes.size()) {
    throw ConfigError("one empirical sum per positive class is required");
  }
  if (in.priors.size() != static_cast<std::size_t>(in.num_classes)) {
    throw ConfigError("theorem 4 needs the class priors");
  }
  const auto negatives = in.negative_classes();
  const double companion = lemma3_coefficient(in.client_index, negatives).companion;
  const double c = in.num_classes;

  double empirical = 0.0, radicals = 0.0, prior_sum = 0.0;
  for (std::size_t s = 0; s < in.positive_classes.size(); ++s) {
    const double pi = in.priors[static_cast<std::size_t>(in.positive_classes[s])];
    const double n = in.labeled_counts[s];
    empirical += pi / n * (1.0 + companion) * empirical_sums[s];
    radicals += pi * (1.0 + companion) * in.confidence_radical(n);
    prior_sum += pi;
  }
  return empirical + (prior_sum + 1.0) * c * in.v * in.inverse_root_sum() + radicals +
         in.confidence_radical(in.unlabeled_count);
}

OrderReport bound_order_theorem5(std::span<const BoundInputs> clients) {
  if (clients.empty()) throw ConfigError("order report needs at least one client");
  const double c = clients.front().num_classes;
  const double k = static_cast<double>(clients.size());
  OrderReport out;
  double total_samples = 0.0;
  for (const auto& in : clients) {
    in.validate();
    if (in.num_classes != clients.front().num_classes) {
      throw ConfigError("clients disagree on the class count");
    }
    double samples = in.unlabeled_count;
    for (double n : in.labeled_counts) samples += n;
    out.fedpu_order += c * c * in.inverse_root_sum();
    out.supervised_fed_order += c * c / std::sqrt(samples);
    total_samples += samples;
  }
  out.supervised_central_order = c * c / std::sqrt(total_samples);
  out.ratio_fed = out.fedpu_order / out.supervised_fed_order;
  out.ratio_central = out.fedpu_order / out.supervised_central_order;
  out.factor_fed = c * std::sqrt(c);
  out.factor_central = c * k * std::sqrt(c * k);
  return out;
}

nlohmann::json to_json(const Lemma3Coefficient& c) {
  return {{"coefficient", c.coefficient},     {"companion", c.companion},
          {"product", c.product},             {"unlabeled_classes", c.unlabeled_classes},
          {"zero_product", c.zero_product},   {"empty_negatives", c.empty_negatives}};
}

nlohmann::json to_json(const Lemma3Audit& audit) {
  return {{"coefficient", to_json(audit.coefficient)},
          {"lhs", audit.lhs},
          {"rhs", audit.rhs},
          {"gap", audit.gap},
          {"lhs_paths", audit.lhs_paths},
          {"rhs_paths", audit.rhs_paths},
          {"path_disagreement", audit.path_disagreement}};
}

nlohmann::json to_json(const OrderReport& report) {
  return {{"fedpu_order", report.fedpu_order},
          {"supervised_fed_order", report.supervised_fed_order},
          {"supervised_central_order", report.supervised_central_order},
          {"ratio_fed", report.ratio_fed},
          {"ratio_central", report.ratio_central},
          {"factor_fed", report.factor_fed},
          {"factor_central", report.factor_central}};
}

}  // namespace fedpu
