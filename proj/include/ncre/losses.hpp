#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ncre/encoder.hpp"
#include "ncre/graph.hpp"
#include "ncre/tensor.hpp"

namespace ncre {

// Negative cosine similarity -<z/|z|, h/|h|>.

/// Per-row values, [n x 1]. Gradient flows into whichever operands require
/// it; pass a detached `h` for the stop-gradient form.
Var negative_cosine_rows(Graph& g, Var z, Var h);
/// Mean of negative_cosine_rows, [1 x 1].
Var d_loss(Graph& g, Var z, Var h);
double d_loss(const SentenceVector& z, const SentenceVector& h);

/// 0.5 * D(z1, h2) + 0.5 * D(z2_tilde, h1_tilde), each term averaged over
/// rows. Row i of every operand belongs to the same positive pair.
Var symmetric_pair_loss(Graph& g, Var z1, Var h2, Var z2_tilde, Var h1_tilde);

/// -(1/N) sum_i y_i . log(y_hat_i) over probability rows. Rows of `y` must be
/// one-hot, rows of `y_hat` non-negative and summing to 1 within 1e-9.
double cross_entropy(const Tensor& y, const Tensor& y_hat);
/// Same loss from logits through a shifted log-sum-exp.
Var cross_entropy_logits(Graph& g, Var logits, std::span<const std::size_t> labels);

/// cls + lambda * cont; lambda must be non-negative.
Var total_loss(Graph& g, Var cls, Var cont, double lambda);
double total_loss(double cls, double cont, double lambda);

}  // namespace ncre
