#include "madg/optim.hpp"

#include <string>

#include "madg/errors.hpp"

namespace madg {

OptimizerState::OptimizerState(std::size_t size, double lr, double mu, double wd)
    : velocity(size, 0.0), learning_rate(lr), momentum(mu), weight_decay(wd) {
  if (!(lr >= 0.0)) throw ContractError("learning rate must be nonnegative");
  if (!(mu >= 0.0 && mu < 1.0)) throw ContractError("momentum must lie in [0, 1)");
  if (!(wd >= 0.0)) throw ContractError("weight decay must be nonnegative");
}

void sgd_momentum_step(OptimizerState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw DimensionError("sgd_momentum_step: params " + std::to_string(params.size()) + ", grads " +
                         std::to_string(grads.size()) + ", velocity " +
                         std::to_string(state.velocity.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (state.weight_decay != 0.0) g += state.weight_decay * params[i];
    state.velocity[i] = state.momentum * state.velocity[i] + g;
    params[i] -= state.learning_rate * state.velocity[i];
  }
}

}  // namespace madg
