#pragma once

#include <cmath>
#include <vector>

#include "fedpu/theory.hpp"

namespace fedpu::testing {

inline BoundInputs bound_inputs(int k, int classes, std::vector<int> positives, std::vector<double> counts,
                                double unlabeled, double v, double delta, std::vector<double> priors = {}) {
  BoundInputs in;
  in.client_index = k;
  in.num_classes = classes;
  in.positive_classes = std::move(positives);
  in.labeled_counts = std::move(counts);
  in.unlabeled_count = unlabeled;
  in.v = v;
  in.delta = delta;
  in.priors = std::move(priors);
  return in;
}

struct HandValue {
  const char* what;
  double got;
  double want;
};

// Five fixed input sets with values worked out by hand.
inline std::vector<HandValue> theory_hand_values() {
  std::vector<HandValue> out;

  // Set 1: C=2, V=1, delta=e^-2, n=100, n_U=100.
  const auto s1 = bound_inputs(1, 2, {0}, {100}, 100, 1.0, std::exp(-2.0));
  out.push_back({"set1 theorem1", bound_theorem1(s1, 0), 0.9});
  out.push_back({"set1 theorem2", bound_theorem2(s1, 0), 0.5});

  // Set 2: C=3, V=1/2, delta=e^-8, n=(64,16), n_U=4; inverse-root sum 7/8.
  const auto s2 = bound_inputs(1, 3, {0, 2}, {64, 16}, 4, 0.5, std::exp(-8.0));
  out.push_back({"set2 theorem1 class 2", bound_theorem1(s2, 2), 3.0 * 0.875 + 0.5});
  out.push_back({"set2 theorem1 class 0", bound_theorem1(s2, 0), 3.0 * 0.875 + 0.25});
  out.push_back({"set2 theorem2 class 2", bound_theorem2(s2, 2), 1.5 * 0.875 + 0.5});

  // Set 3: C=2, k=1, N={class 2}: companion 1; sums S=10.
  const auto s3 = bound_inputs(1, 2, {0}, {100}, 400, 1.0, std::exp(-2.0), {0.5, 0.5});
  const std::vector<double> sums3{10.0};
  out.push_back({"set3 theorem4", bound_theorem4(s3, sums3), 0.1 + 0.45 + 0.1 + 0.05});

  // Set 4: C=3, k=2, N={classes 1,3}: companion 1/4; zero sums.
  const auto s4 = bound_inputs(2, 3, {1}, {25}, 100, 2.0, std::exp(-2.0), {0.2, 0.5, 0.3});
  const std::vector<double> sums4{0.0};
  out.push_back({"set4 theorem4", bound_theorem4(s4, sums4), 2.7 + 0.125 + 0.1});

  // Set 5: orders for K=1 (C=4) and K=2 (C=2).
  const std::vector<BoundInputs> one{bound_inputs(1, 4, {0}, {100}, 300, 1.0, 0.05)};
  const OrderReport r1 = bound_order_theorem5(one);
  out.push_back({"set5 fedpu order K=1", r1.fedpu_order, 16.0 * (0.1 + 1.0 / std::sqrt(300.0))});
  out.push_back({"set5 supervised order K=1", r1.supervised_fed_order, 0.8});
  out.push_back({"set5 central order K=1", r1.supervised_central_order, 0.8});
  const std::vector<BoundInputs> two{bound_inputs(1, 2, {0}, {25}, 100, 1.0, 0.05),
                                     bound_inputs(2, 2, {1}, {16}, 9, 1.0, 0.05)};
  const OrderReport r2 = bound_order_theorem5(two);
  out.push_back({"set5 fedpu order K=2", r2.fedpu_order, 4.0 * (0.3 + 0.25 + 1.0 / 3.0)});
  out.push_back({"set5 supervised order K=2", r2.supervised_fed_order, 4.0 / std::sqrt(125.0) + 0.8});
  out.push_back({"set5 central order K=2", r2.supervised_central_order, 4.0 / std::sqrt(150.0)});
  out.push_back({"set5 factor K=2", r2.factor_central, 4.0 * 2.0});
  return out;
}

}  // namespace fedpu::testing
