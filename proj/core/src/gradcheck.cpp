#include "fedpu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedpu/error.hpp"
#include "fedpu/rng.hpp"

namespace fedpu {

GradCheckReport gradcheck(const Eigen::VectorXd& point, const LossFunction& loss,
                          const Eigen::VectorXd& analytic, const GradCheckOptions& options) {
  if (analytic.size() != point.size()) throw ShapeError("gradcheck: gradient size mismatch");
  const auto n = static_cast<std::size_t>(point.size());

  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates > 0) {
    const std::size_t want = std::min(n, std::max<std::size_t>(options.max_coordinates, 200));
    Rng rng(options.seed);
    rng.shuffle(std::span(coords));
    coords.resize(want);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  const double h = options.step;
  const double center = loss(point);
  Eigen::VectorXd probe = point;
  for (std::size_t i : coords) {
    const auto idx = static_cast<Eigen::Index>(i);
    probe[idx] = point[idx] + h;
    const double plus = loss(probe);
    probe[idx] = point[idx] - h;
    const double minus = loss(probe);
    probe[idx] = point[idx];

    const double right = (plus - center) / h;
    const double left = (center - minus) / h;
    const double slope_scale = std::max({1.0, std::abs(left), std::abs(right)});
    if (std::abs(right - left) > options.kink_tolerance * slope_scale) {
      report.skipped_kinks.push_back(i);
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[idx];
    const double denom =
        std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
    const double rel = std::abs(a - numeric) / denom;
    ++report.checked;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = i;
    }
  }
  return report;
}

}  // namespace fedpu
