#include "fedpu/surrogate.hpp"

#include <cmath>

#include "fedpu/error.hpp"

namespace fedpu {

std::string to_string(SurrogateKind kind) {
  return kind == SurrogateKind::kLinear ? "linear" : "log_complement";
}

SurrogateKind surrogate_kind_from_string(const std::string& name) {
  if (name == "linear") return SurrogateKind::kLinear;
  if (name == "log_complement") return SurrogateKind::kLogComplement;
  throw ConfigError("unknown surrogate '" + name + "'");
}

double surrogate_value(double p, SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::kLinear:
      return 1.0 - p;
    case SurrogateKind::kLogComplement:
      return -std::log(std::max(1.0 - p, kLogComplementFloor));
  }
  return 0.0;
}

double surrogate_derivative(double p, SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::kLinear:
      return -1.0;
    case SurrogateKind::kLogComplement: {
      const double q = 1.0 - p;
      return q > kLogComplementFloor ? 1.0 / q : 0.0;
    }
  }
  return 0.0;
}

double surrogate_neq(std::span<const double> probs, int m, const SurrogateSpec& spec) {
  if (m < 0 || static_cast<std::size_t>(m) >= probs.size()) {
    throw ConfigError("class " + std::to_string(m) + " outside the " +
                      std::to_string(probs.size()) + "-class probability row");
  }
  return surrogate_value(probs[static_cast<std::size_t>(m)], spec.kind);
}

}  // namespace fedpu
