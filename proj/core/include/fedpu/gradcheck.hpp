#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace fedpu {

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample of at least 200.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  // One-sided slopes disagreeing by more than this (relative) mark a kink.
  double kink_tolerance = 1e-3;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t checked = 0;
  std::vector<std::size_t> skipped_kinks;
};

using LossFunction = std::function<double(const Eigen::VectorXd&)>;

// Central-difference comparison of `analytic` against `loss` around `point`.
GradCheckReport gradcheck(const Eigen::VectorXd& point, const LossFunction& loss,
                          const Eigen::VectorXd& analytic, const GradCheckOptions& options = {});

}  // namespace fedpu
