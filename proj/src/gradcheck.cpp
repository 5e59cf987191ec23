#include "madg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace madg {

namespace {

double evaluate(const LossBuilder& build, std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (Tensor& t : inputs) vars.push_back(tape.leaf(t));
  return tape.value(build(tape, vars)).item();
}

}  // namespace

GradCheckResult check_gradients(const LossBuilder& build, std::vector<Tensor> inputs, double step) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor& t : inputs) vars.push_back(tape.leaf(t));
    tape.backward(build(tape, vars));
  }

  GradCheckResult result;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const std::vector<double> analytic(inputs[a].grad().begin(), inputs[a].grad().end());
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double saved = inputs[a][i];
      inputs[a][i] = saved + step;
      const double up = evaluate(build, inputs);
      inputs[a][i] = saved - step;
      const double down = evaluate(build, inputs);
      inputs[a][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = a;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace madg
