#include "fedpu/risk.hpp"

#include <algorithm>
#include <cmath>

#include "fedpu/error.hpp"

namespace fedpu {

namespace {

std::vector<char> membership(std::span<const int> classes, int num_classes) {
  std::vector<char> in(static_cast<std::size_t>(num_classes), 0);
  for (int c : classes) {
    if (c < 0 || c >= num_classes) {
      throw ConfigError("class " + std::to_string(c) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    in[static_cast<std::size_t>(c)] = 1;
  }
  return in;
}

std::vector<int> complement(const std::vector<char>& in) {
  std::vector<int> out;
  for (std::size_t c = 0; c < in.size(); ++c) {
    if (!in[c]) out.push_back(static_cast<int>(c));
  }
  return out;
}

int checked_classes(const ProbRows& a, const ProbRows& b, const ClassPriorVector& priors) {
  const auto classes = static_cast<Eigen::Index>(priors.size());
  if ((a.rows() > 0 && a.cols() != classes) || (b.rows() > 0 && b.cols() != classes)) {
    throw ShapeError("probability rows do not match the number of class priors");
  }
  return static_cast<int>(classes);
}

std::vector<std::size_t> class_counts(std::span<const int> labels, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ConfigError("label outside class range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

}  // namespace

std::string to_string(TableMode mode) {
  return mode == TableMode::kPaperLiteral ? "paper_literal" : "multiplicity_normalized";
}

TableMode table_mode_from_string(const std::string& name) {
  if (name == "paper_literal") return TableMode::kPaperLiteral;
  if (name == "multiplicity_normalized") return TableMode::kMultiplicityNormalized;
  throw ConfigError("unknown table mode '" + name + "'");
}

std::string to_string(SupervisedForm form) {
  return form == SupervisedForm::kCrossEntropy ? "cross_entropy" : "surrogate";
}

SupervisedForm supervised_form_from_string(const std::string& name) {
  if (name == "cross_entropy") return SupervisedForm::kCrossEntropy;
  if (name == "surrogate") return SupervisedForm::kPriorWeightedSurrogate;
  throw ConfigError("unknown supervised loss form '" + name + "'");
}

Eigen::MatrixXd CrossClientTermTable::weight_matrix(int num_classes) const {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(num_classes, num_classes);
  for (const auto& e : entries) w(e.positive_class, e.other_class) += e.weight;
  return w;
}

std::vector<CrossClientTermTable> build_cross_client_tables(
    std::span<const ClientPositiveSet> positive_sets, int num_classes, TableMode mode) {
  std::vector<ClientPositiveSet> sets(positive_sets.begin(), positive_sets.end());
  std::sort(sets.begin(), sets.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });

  std::vector<std::vector<char>> member;
  std::vector<int> multiplicity(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : sets) {
    member.push_back(membership(s.classes, num_classes));
    for (int c = 0; c < num_classes; ++c) multiplicity[static_cast<std::size_t>(c)] += member.back()[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (multiplicity[static_cast<std::size_t>(c)] == 0) {
      throw ConfigError("coverage violated: class " + std::to_string(c) +
                        " is positive in no client");
    }
  }

  std::vector<CrossClientTermTable> tables;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    CrossClientTermTable table;
    table.client_id = sets[k].client_id;
    table.mode = mode;
    for (std::size_t q = 0; q < sets.size(); ++q) {
      if (q == k) continue;
      for (int i = 0; i < num_classes; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (!member[k][iu] || member[q][iu]) continue;
        const double weight = mode == TableMode::kPaperLiteral
                                  ? 1.0
                                  : 1.0 / static_cast<double>(multiplicity[iu]);
        for (int m = 0; m < num_classes; ++m) {
          if (m == i || member[q][static_cast<std::size_t>(m)]) continue;
          table.entries.push_back({sets[q].client_id, i, m, weight});
        }
      }
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

nlohmann::json to_json(const RiskBreakdown& b, int client_id) {
  return {{"client", client_id},   {"term_pos", b.term_pos}, {"term_unl", b.term_unl},
          {"term_cross", b.term_cross}, {"total", b.total},  {"clamped", b.clamped}};
}

LossResult fedpu_client_loss(const ProbRows& labeled_probs, std::span<const int> labels,
                             const ProbRows& unlabeled_probs, const ClassPriorVector& priors,
                             std::span<const int> positive_classes,
                             const CrossClientTermTable& table, const SurrogateSpec& spec) {
  const int classes = checked_classes(labeled_probs, unlabeled_probs, priors);
  if (static_cast<Eigen::Index>(labels.size()) != labeled_probs.rows()) {
    throw ShapeError("label count does not match labeled rows");
  }
  if (labeled_probs.rows() == 0 && unlabeled_probs.rows() == 0) {
    throw ConfigError("FedPU loss needs a nonempty labeled or unlabeled batch");
  }
  const auto positive = membership(positive_classes, classes);
  const auto negatives = complement(positive);
  const auto counts = class_counts(labels, classes);
  for (int y : labels) {
    if (!positive[static_cast<std::size_t>(y)]) {
      throw ConfigError("labeled sample of class " + std::to_string(y) +
                        " outside the client's positive set");
    }
  }
  const Eigen::MatrixXd cross_w = table.weight_matrix(classes);
  const SurrogateKind kind = spec.kind;

  LossResult out;
  RiskBreakdown& b = out.breakdown;
  b.class_pos.assign(static_cast<std::size_t>(classes), 0.0);
  b.class_cross.assign(static_cast<std::size_t>(classes), 0.0);
  for (int c : positive_classes) {
    if (counts[static_cast<std::size_t>(c)] == 0) b.missing_classes.push_back(c);
  }

  const Eigen::Index n_lab = labeled_probs.rows();
  const Eigen::Index n_unl = unlabeled_probs.rows();
  RowMatrix grad_self = RowMatrix::Zero(n_lab, classes);
  out.grad_pos = RowMatrix::Zero(n_lab, classes);
  out.grad_cross = RowMatrix::Zero(n_lab, classes);
  double pos_self = 0.0;
  double pos_neg = 0.0;

  for (Eigen::Index r = 0; r < n_lab; ++r) {
    const int i = labels[static_cast<std::size_t>(r)];
    const auto iu = static_cast<std::size_t>(i);
    const double coef = priors[iu] / static_cast<double>(counts[iu]);
    const double self = coef * surrogate_value(labeled_probs(r, i), kind);
    grad_self(r, i) = coef * surrogate_derivative(labeled_probs(r, i), kind);
    double neg = 0.0;
    for (int m : negatives) {
      const double p = labeled_probs(r, m);
      neg += surrogate_value(p, kind);
      out.grad_pos(r, m) = -coef * surrogate_derivative(p, kind);
    }
    neg *= coef;
    pos_self += self;
    pos_neg += neg;
    b.class_pos[iu] += self - neg;

    double cross = 0.0;
    for (int m = 0; m < classes; ++m) {
      const double w = cross_w(i, m);
      if (w == 0.0) continue;
      const double p = labeled_probs(r, m);
      cross += w * coef * surrogate_value(p, kind);
      out.grad_cross(r, m) = w * coef * surrogate_derivative(p, kind);
    }
    b.class_cross[iu] += cross;
    b.term_cross += cross;
  }
  out.grad_pos += grad_self;
  b.term_pos = pos_self - pos_neg;

  out.grad_unlabeled = RowMatrix::Zero(n_unl, classes);
  if (n_unl > 0 && !negatives.empty()) {
    const double inv = 1.0 / static_cast<double>(n_unl);
    for (Eigen::Index r = 0; r < n_unl; ++r) {
      double row = 0.0;
      for (int m : negatives) {
        const double p = unlabeled_probs(r, m);
        row += surrogate_value(p, kind);
        out.grad_unlabeled(r, m) = inv * surrogate_derivative(p, kind);
      }
      b.term_unl += inv * row;
    }
  }

  b.total = b.term_pos + b.term_unl - b.term_cross;
  out.grad_labeled = out.grad_pos - out.grad_cross;

  if (spec.nonneg_clamp) {
    const double negative_risk = b.term_unl - pos_neg - b.term_cross;
    if (negative_risk < 0.0) {
      b.clamped = true;
      b.total = pos_self;
      out.grad_labeled = grad_self;
      out.grad_unlabeled.setZero();
    }
  }
  return out;
}

LossResult supervised_loss(const ProbRows& probs, std::span<const int> labels,
                           const ClassPriorVector& priors, SupervisedForm form,
                           const SurrogateSpec& spec) {
  const int classes = checked_classes(probs, probs, priors);
  if (probs.rows() == 0) throw ConfigError("supervised loss on an empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw ShapeError("label count does not match rows");
  }
  const auto counts = class_counts(labels, classes);
  LossResult out;
  out.grad_labeled = RowMatrix::Zero(probs.rows(), classes);
  out.grad_unlabeled = RowMatrix::Zero(0, classes);
  RiskBreakdown& b = out.breakdown;
  b.class_pos.assign(static_cast<std::size_t>(classes), 0.0);
  b.class_cross.assign(static_cast<std::size_t>(classes), 0.0);

  const double inv_batch = 1.0 / static_cast<double>(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    const auto yu = static_cast<std::size_t>(y);
    const double p = probs(r, y);
    double value = 0.0;
    if (form == SupervisedForm::kCrossEntropy) {
      value = -std::log(std::max(p, kLogComplementFloor)) * inv_batch;
      out.grad_labeled(r, y) = p > kLogComplementFloor ? -inv_batch / p : 0.0;
    } else {
      const double coef = priors[yu] / static_cast<double>(counts[yu]);
      value = coef * surrogate_value(p, spec.kind);
      out.grad_labeled(r, y) = coef * surrogate_derivative(p, spec.kind);
    }
    b.class_pos[yu] += value;
    b.term_pos += value;
  }
  b.total = b.term_pos;
  return out;
}

LossResult positive_only_loss(const ProbRows& labeled_probs, std::span<const int> labels,
                              const ClassPriorVector& priors, SupervisedForm form,
                              const SurrogateSpec& spec) {
  if (labeled_probs.rows() == 0) throw ConfigError("positive-only loss with no labeled data");
  return supervised_loss(labeled_probs, labels, priors, form, spec);
}

LossResult single_negative_pu_loss(const ProbRows& labeled_probs, std::span<const int> labels,
                                   const ProbRows& unlabeled_probs,
                                   const ClassPriorVector& priors,
                                   std::span<const int> positive_classes,
                                   const SurrogateSpec& spec) {
  const int classes = checked_classes(labeled_probs, unlabeled_probs, priors);
  if (static_cast<Eigen::Index>(labels.size()) != labeled_probs.rows()) {
    throw ShapeError("label count does not match labeled rows");
  }
  const auto positive = membership(positive_classes, classes);
  const auto negatives = complement(positive);
  if (negatives.empty()) {
    throw ConfigError("single-negative PU loss needs at least one negative class");
  }
  if (labeled_probs.rows() == 0 && unlabeled_probs.rows() == 0) {
    throw ConfigError("single-negative PU loss needs a nonempty batch");
  }
  const auto counts = class_counts(labels, classes);
  const SurrogateKind kind = spec.kind;

  LossResult out;
  RiskBreakdown& b = out.breakdown;
  b.class_pos.assign(static_cast<std::size_t>(classes), 0.0);
  b.class_cross.assign(static_cast<std::size_t>(classes), 0.0);
  for (int c : positive_classes) {
    if (counts[static_cast<std::size_t>(c)] == 0) b.missing_classes.push_back(c);
  }
  out.grad_labeled = RowMatrix::Zero(labeled_probs.rows(), classes);
  out.grad_unlabeled = RowMatrix::Zero(unlabeled_probs.rows(), classes);

  for (Eigen::Index r = 0; r < labeled_probs.rows(); ++r) {
    const int i = labels[static_cast<std::size_t>(r)];
    const auto iu = static_cast<std::size_t>(i);
    if (!positive[iu]) throw ConfigError("labeled sample outside the positive set");
    const double coef = priors[iu] / static_cast<double>(counts[iu]);
    double q = 0.0;
    for (int m : negatives) q += labeled_probs(r, m);
    const double value =
        coef * (surrogate_value(labeled_probs(r, i), kind) - surrogate_value(q, kind));
    out.grad_labeled(r, i) = coef * surrogate_derivative(labeled_probs(r, i), kind);
    const double dq = -coef * surrogate_derivative(q, kind);
    for (int m : negatives) out.grad_labeled(r, m) = dq;
    b.class_pos[iu] += value;
    b.term_pos += value;
  }
  if (unlabeled_probs.rows() > 0) {
    const double inv = 1.0 / static_cast<double>(unlabeled_probs.rows());
    for (Eigen::Index r = 0; r < unlabeled_probs.rows(); ++r) {
      double q = 0.0;
      for (int m : negatives) q += unlabeled_probs(r, m);
      b.term_unl += inv * surrogate_value(q, kind);
      const double dq = inv * surrogate_derivative(q, kind);
      for (int m : negatives) out.grad_unlabeled(r, m) = dq;
    }
  }
  b.total = b.term_pos + b.term_unl;
  return out;
}

double unlabeled_negative_risk(const ProbRows& probs, std::span<const int> negatives,
                               const SurrogateSpec& spec) {
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (int m : negatives) total += surrogate_value(probs(r, m), spec.kind);
  }
  return total / static_cast<double>(probs.rows());
}

UnlabeledExpansion expand_unlabeled_risk(std::span<const RowMatrix> class_pools,
                                         const ClassPriorVector& priors,
                                         std::span<const int> negatives,
                                         const SurrogateSpec& spec) {
  const int classes = static_cast<int>(priors.size());
  if (static_cast<int>(class_pools.size()) != classes) {
    throw ShapeError("need one pool per class");
  }
  const auto negative = membership(negatives, classes);
  UnlabeledExpansion out;
  for (int c = 0; c < classes; ++c) {
    const RowMatrix& pool = class_pools[static_cast<std::size_t>(c)];
    if (pool.rows() == 0) continue;
    const double weight = priors[static_cast<std::size_t>(c)] / static_cast<double>(pool.rows());
    for (int m : negatives) {
      double sum = 0.0;
      for (Eigen::Index r = 0; r < pool.rows(); ++r) sum += surrogate_value(pool(r, m), spec.kind);
      const double term = weight * sum;
      if (!negative[static_cast<std::size_t>(c)]) {
        out.positive_to_negative += term;
      } else if (m == c) {
        out.negative_self += term;
      } else {
        out.negative_cross += term;
      }
    }
  }
  return out;
}

}  // namespace fedpu
