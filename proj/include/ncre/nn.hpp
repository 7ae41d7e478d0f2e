#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ncre/graph.hpp"
#include "ncre/rng.hpp"
#include "ncre/tensor.hpp"

namespace ncre {

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

/// y = x W + b with W [in x out]. W ~ U(-a, a) with a = sqrt(3 / in), b = 0.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Var forward(Graph& g, Var x);

  std::size_t in_dim() const { return weight.tensor.rows(); }
  std::size_t out_dim() const { return weight.tensor.cols(); }
  ParameterRefs parameters() { return {&weight, &bias}; }
  std::vector<const Parameter*> parameters() const { return {&weight, &bias}; }

  Parameter weight;
  Parameter bias;
};

/// Stack of Linear layers with an activation between consecutive layers and,
/// when `activate_last` is set, after the final one.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<std::size_t>& dims, Activation act,
      bool activate_last, Rng& rng);

  Var forward(Graph& g, Var x);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  Activation activation() const { return act_; }
  void set_prefix(const std::string& prefix);
  ParameterRefs parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kRelu;
  bool activate_last_ = false;
};

/// Rewrites the leading `from` of every parameter name to `to`.
void replace_prefix(const ParameterRefs& params, const std::string& from, const std::string& to);

void set_frozen(const ParameterRefs& params, bool frozen);

template <typename Range>
std::vector<const Parameter*> as_const(const Range& refs) {
  return std::vector<const Parameter*>(refs.begin(), refs.end());
}

}  // namespace ncre
