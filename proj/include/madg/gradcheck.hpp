#pragma once

#include <functional>
#include <span>
#include <vector>

#include "madg/autodiff.hpp"

namespace madg {

/// Builds a scalar loss on the tape from leaf variables bound to the given inputs.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares tape gradients against central finite differences for every entry of every
/// input. The error per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult check_gradients(const LossBuilder& build, std::vector<Tensor> inputs, double step = 1e-5);

}  // namespace madg
