#include "ncre/optim.hpp"

#include <algorithm>
#include <cmath>

#include "ncre/errors.hpp"

namespace ncre {

void clear_grads(const ParameterRefs& params) {
  for (Parameter* p : params) p->tensor.clear_grad();
}

void sgd_step(const ParameterRefs& params, OptimizerState& state) {
  if (!(state.learning_rate >= 0.0)) {
    throw ContractError("learning rate must be non-negative");
  }
  for (const Parameter* p : params) {
    if (!p->frozen && !p->tensor.has_grad()) {
      throw ContractError("parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter* p : params) {
    if (p->frozen) continue;
    auto data = p->tensor.data();
    auto grad = p->tensor.grad();
    if (state.momentum > 0.0) {
      auto& v = state.velocity[p->name];
      if (v.size() != data.size()) v.assign(data.size(), 0.0);
      for (std::size_t i = 0; i < data.size(); ++i) {
        v[i] = state.momentum * v[i] + grad[i];
        data[i] -= state.learning_rate * v[i];
      }
    } else {
      for (std::size_t i = 0; i < data.size(); ++i) data[i] -= state.learning_rate * grad[i];
    }
  }
  clear_grads(params);
  ++state.step_count;
}

double finite_difference_check(const ParameterRefs& params,
                               const std::function<Var(Graph&)>& loss, double step) {
  if (!(step > 0.0)) throw ContractError("finite difference step must be positive");
  clear_grads(params);
  {
    Graph g;
    Var l = loss(g);
    g.backward(l);
  }
  auto evaluate = [&] {
    Graph g(Graph::kNoGrad);
    return g.scalar(loss(g));
  };

  double worst = 0.0;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    const std::vector<double> analytic =
        p->tensor.has_grad()
            ? std::vector<double>(p->tensor.grad().begin(), p->tensor.grad().end())
            : std::vector<double>(p->tensor.size(), 0.0);
    auto data = p->tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = evaluate();
      data[i] = saved - step;
      const double down = evaluate();
      data[i] = saved;
      const double central = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - central) / denom);
    }
  }
  clear_grads(params);
  return worst;
}

}  // namespace ncre
