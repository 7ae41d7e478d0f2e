#include "ncre/losses.hpp"

#include <cmath>
#include <string>

#include "ncre/errors.hpp"

namespace ncre {

Var negative_cosine_rows(Graph& g, Var z, Var h) {
  return g.scale(g.rowwise_dot(g.l2_normalize_rows(z), g.l2_normalize_rows(h)), -1.0);
}

Var d_loss(Graph& g, Var z, Var h) { return g.mean(negative_cosine_rows(g, z, h)); }

double d_loss(const SentenceVector& z, const SentenceVector& h) {
  Graph g(Graph::kNoGrad);
  return g.scalar(d_loss(g, g.constant(z.values), g.constant(h.values)));
}

Var symmetric_pair_loss(Graph& g, Var z1, Var h2, Var z2_tilde, Var h1_tilde) {
  return g.add(g.scale(d_loss(g, z1, h2), 0.5), g.scale(d_loss(g, z2_tilde, h1_tilde), 0.5));
}

double cross_entropy(const Tensor& y, const Tensor& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    throw DimensionError("cross_entropy: labels " + shape_str(y.shape()) + " vs predictions " +
                         shape_str(y_hat.shape()));
  }
  const std::size_t n = y.rows(), k = y.cols();
  if (n == 0) throw EmptyInputError("cross_entropy on zero rows");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    std::size_t hot = k, ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = y_hat.at(i, j);
      if (!(p >= 0.0)) throw ContractError("cross_entropy: negative probability in row " + std::to_string(i));
      row_sum += p;
      if (y.at(i, j) == 1.0) {
        hot = j;
        ++ones;
      } else if (y.at(i, j) != 0.0) {
        throw ContractError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (ones != 1) throw ContractError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
    if (std::abs(row_sum - 1.0) > 1e-9) {
      throw ContractError("cross_entropy: prediction row " + std::to_string(i) + " sums to " +
                          std::to_string(row_sum));
    }
    // Only the true class contributes, so 0 * log(0) never arises.
    total -= std::log(y_hat.at(i, hot));
  }
  return total / static_cast<double>(n);
}

Var cross_entropy_logits(Graph& g, Var logits, std::span<const std::size_t> labels) {
  return g.softmax_cross_entropy(logits, labels);
}

Var total_loss(Graph& g, Var cls, Var cont, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("lambda must be non-negative");
  return g.add(cls, g.scale(cont, lambda));
}

double total_loss(double cls, double cont, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("lambda must be non-negative");
  return cls + lambda * cont;
}

}  // namespace ncre
