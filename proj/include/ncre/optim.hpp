#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ncre/graph.hpp"
#include "ncre/tensor.hpp"

namespace ncre {

struct OptimizerState {
  double learning_rate = 0.01;
  /// 0 gives plain SGD.
  double momentum = 0.0;
  std::map<std::string, std::vector<double>> velocity;
  std::uint64_t step_count = 0;
};

/// p <- p - lr * grad for every non-frozen parameter (heavy-ball velocity when
/// momentum > 0). Frozen parameters are never written. Every gradient buffer
/// in `params` is released afterwards, so each step needs a fresh backward().
void sgd_step(const ParameterRefs& params, OptimizerState& state);

void clear_grads(const ParameterRefs& params);

/// Largest relative error between backprop gradients and central differences
/// over every entry of every non-frozen parameter in `params`.
///
/// `loss` rebuilds the scalar objective on the graph it is handed; it is
/// called once in record mode and twice per perturbed entry in no-grad mode.
/// Relative error is |a - c| / max(|a|, |c|, 1e-8).
double finite_difference_check(const ParameterRefs& params,
                               const std::function<Var(Graph&)>& loss, double step);

}  // namespace ncre
