#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ncre/tensor.hpp"

namespace ncre {

/// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = 0;
};

enum class Activation { kRelu, kTanh };

/// Tape for reverse-mode differentiation over 2-D values.
///
/// Every operation appends a node holding its forward value and a closure
/// that pushes the node's gradient into its inputs. Parameter leaves
/// reference the parameter tensor directly; on backward() their gradients are
/// accumulated into Parameter::tensor's gradient buffer. Frozen parameters,
/// constants and detached values do not require gradients, and nothing is
/// propagated through subgraphs built solely from them.
class Graph {
 public:
  enum Mode { kRecord, kNoGrad };

  explicit Graph(Mode mode = kRecord) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  Var matmul(Var a, Var b);
  /// x [n x d] + bias [1 x d] broadcast over rows.
  Var add_row(Var x, Var bias);
  Var add(Var a, Var b);
  Var scale(Var x, double factor);
  Var activation(Var x, Activation kind);
  Var relu(Var x) { return activation(x, Activation::kRelu); }
  Var tanh(Var x) { return activation(x, Activation::kTanh); }

  /// Rows of `table` selected by `ids`.
  Var gather_rows(Var table, std::span<const std::size_t> ids);
  /// offsets has B+1 entries; segment b covers rows [offsets[b], offsets[b+1]).
  Var segment_mean(Var x, std::span<const std::size_t> offsets);
  Var segment_last(Var x, std::span<const std::size_t> offsets);

  /// Row-wise x / ||x||_2. Throws DegenerateVectorError when a row norm is
  /// at or below kNormEpsilon.
  Var l2_normalize_rows(Var x);
  /// [n x d], [n x d] -> [n x 1].
  Var rowwise_dot(Var a, Var b);
  /// Mean over every entry, [1 x 1].
  Var mean(Var x);
  Var sum(Var x);
  /// Mean over rows of log-sum-exp(logits) - logits[label]; [1 x 1].
  Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
  /// Same value, no gradient flows back through it.
  Var detach(Var x);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient accumulated on a node by backward(); empty if none reached it.
  std::span<const double> grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  static constexpr double kNormEpsilon = 1e-12;

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    std::function<void(Graph&, std::size_t)> backward;
  };

  Var push(Node node);
  const Tensor& val(std::size_t id) const;
  std::span<double> acc(std::size_t id);

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace ncre
