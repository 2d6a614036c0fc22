#pragma once

#include <utility>

#include <Eigen/Dense>

#include "fedpu/model.hpp"

namespace fedpu {

// eta_t = initial * decay^t, evaluated directly (not by repeated multiplication).
struct LearningRateSchedule {
  double initial = 0.01;
  double decay = 0.995;

  double at(int round) const;
};

// Heavy-ball momentum: v <- momentum * v + g; w <- w - lr * v.
struct OptimizerState {
  Eigen::VectorXd velocity;
  double momentum = 0.5;
  double learning_rate = 0.01;
};

OptimizerState make_optimizer_state(const ParamVector& params, double learning_rate,
                                    double momentum = 0.5);

std::pair<ParamVector, OptimizerState> sgd_momentum_step(const ParamVector& params,
                                                         const ParamVector& grads,
                                                         OptimizerState state);

// In-place form used inside the local training loop.
void apply_sgd_momentum(ParamVector& params, const Eigen::VectorXd& grads, OptimizerState& state);

}  // namespace fedpu
