#pragma once

#include <span>
#include <string>

namespace fedpu {

// Differentiable stand-ins for the 0-1 quantity P(f(x) != m), written as a
// function of p = p_m(x).
//   linear:         1 - p
//   log_complement: -log(max(1 - p, eps))
enum class SurrogateKind { kLinear, kLogComplement };

inline constexpr double kLogComplementFloor = 1e-12;

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::kLinear;
  bool nonneg_clamp = false;
};

std::string to_string(SurrogateKind kind);
SurrogateKind surrogate_kind_from_string(const std::string& name);

double surrogate_value(double p, SurrogateKind kind);
double surrogate_derivative(double p, SurrogateKind kind);

// Surrogate of P(f(x) != m) for one softmax row. Throws ConfigError if m >= C.
double surrogate_neq(std::span<const double> probs, int m, const SurrogateSpec& spec);

}  // namespace fedpu
