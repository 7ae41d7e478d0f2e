#include "ncre/nn.hpp"

#include <cmath>

#include "ncre/errors.hpp"

namespace ncre {

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected relu|tanh)");
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ContractError("linear layer '" + name + "' needs positive dims");
  weight.name = name + ".weight";
  weight.tensor = Tensor({in, out});
  const double s = std::sqrt(3.0 / static_cast<double>(in));
  for (double& w : weight.tensor.data()) w = rng.uniform(-s, s);
  bias.name = name + ".bias";
  bias.tensor = Tensor({out});
}

Var Linear::forward(Graph& g, Var x) {
  const Tensor& in = g.value(x);
  if (in.cols() != in_dim()) {
    throw DimensionError("linear '" + weight.name + "': input " + shape_str(in.shape()) +
                         " vs weight " + shape_str(weight.tensor.shape()));
  }
  return g.add_row(g.matmul(x, g.parameter(weight)), g.parameter(bias));
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& dims, Activation act,
         bool activate_last, Rng& rng)
    : act_(act), activate_last_(activate_last) {
  if (dims.size() < 2) throw ContractError("mlp '" + name + "' needs at least two dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(name + ".layer" + std::to_string(i + 1), dims[i], dims[i + 1], rng);
  }
}

Var Mlp::forward(Graph& g, Var x) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(g, x);
    if (i + 1 < layers_.size() || activate_last_) x = g.activation(x, act_);
  }
  return x;
}

void Mlp::set_prefix(const std::string& prefix) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i + 1);
    layers_[i].weight.name = base + ".weight";
    layers_[i].bias.name = base + ".bias";
  }
}

ParameterRefs Mlp::parameters() {
  ParameterRefs out;
  for (Linear& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const Linear& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

void replace_prefix(const ParameterRefs& params, const std::string& from, const std::string& to) {
  for (Parameter* p : params) {
    if (p->name.rfind(from, 0) != 0) {
      throw ContractError("parameter '" + p->name + "' does not start with '" + from + "'");
    }
    p->name = to + p->name.substr(from.size());
  }
}

void set_frozen(const ParameterRefs& params, bool frozen) {
  for (Parameter* p : params) p->frozen = frozen;
}

}  // namespace ncre
