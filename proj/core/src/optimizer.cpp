#include "fedpu/optimizer.hpp"

#include <cmath>

#include "fedpu/error.hpp"

namespace fedpu {

double LearningRateSchedule::at(int round) const {
  return initial * std::pow(decay, static_cast<double>(round));
}

OptimizerState make_optimizer_state(const ParamVector& params, double learning_rate,
                                    double momentum) {
  return {Eigen::VectorXd::Zero(params.values().size()), momentum, learning_rate};
}

void apply_sgd_momentum(ParamVector& params, const Eigen::VectorXd& grads, OptimizerState& state) {
  if (grads.size() != params.values().size() || state.velocity.size() != grads.size()) {
    throw ShapeError("optimizer step shape mismatch");
  }
  if (!grads.allFinite()) throw NumericError("non-finite gradient in optimizer step");
  state.velocity = state.momentum * state.velocity + grads;
  params.values() -= state.learning_rate * state.velocity;
}

std::pair<ParamVector, OptimizerState> sgd_momentum_step(const ParamVector& params,
                                                         const ParamVector& grads,
                                                         OptimizerState state) {
  ParamVector next = params;
  apply_sgd_momentum(next, grads.values(), state);
  return {std::move(next), std::move(state)};
}

}  // namespace fedpu
