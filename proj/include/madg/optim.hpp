#pragma once

#include <span>
#include <vector>

namespace madg {

/// Classical momentum state for one parameter tensor.
///
///   v <- momentum * v + (g + weight_decay * theta)
///   theta <- theta - learning_rate * v
struct OptimizerState {
  std::vector<double> velocity;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;

  OptimizerState() = default;
  OptimizerState(std::size_t size, double lr, double mu, double wd);
};

/// Applies one SGD-with-momentum update in place. Throws DimensionError on length mismatch.
void sgd_momentum_step(OptimizerState& state, std::span<double> params, std::span<const double> grads);

}  // namespace madg
