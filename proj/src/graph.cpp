#include "ncre/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "ncre/errors.hpp"

namespace ncre {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::Map<RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;

Tensor as_matrix(Tensor t) {
  if (t.ndim() == 2 && !t.has_grad()) return t;
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<double> d(t.data().begin(), t.data().end());
  return Tensor::matrix(r, c, std::move(d));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " does not match " + shape_str(b.shape()));
  }
}

void check_offsets(const Tensor& x, std::span<const std::size_t> offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw DimensionError("segment offsets do not cover " + shape_str(x.shape()));
  }
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    if (offsets[b + 1] <= offsets[b]) throw EmptyInputError("empty segment in pooling");
  }
}

}  // namespace

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

const Tensor& Graph::value(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("unknown graph node");
  return val(v.id);
}

double Graph::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw DimensionError("expected a scalar, got " + shape_str(t.shape()));
  return t[0];
}

std::span<double> Graph::acc(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(val(id).size(), 0.0);
  return n.grad;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = as_matrix(std::move(value));
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  if (p.tensor.ndim() < 1 || p.tensor.ndim() > 2) {
    throw DimensionError("parameter '" + p.name + "' must be 1-D or 2-D, got " +
                         shape_str(p.tensor.shape()));
  }
  Node n;
  n.ref = &p.tensor;
  n.param = &p;
  n.requires_grad = mode_ == kRecord && !p.frozen;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  }
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor out({n, m});
  ConstMat ma(A.data().data(), Eigen::Index(n), Eigen::Index(k));
  ConstMat mb(B.data().data(), Eigen::Index(k), Eigen::Index(m));
  Mat(out.data().data(), Eigen::Index(n), Eigen::Index(m)).noalias() = ma * mb;
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  node.backward = [a, b, n, k, m](Graph& g, std::size_t self) {
    ConstMat dc(g.nodes_[self].grad.data(), Eigen::Index(n), Eigen::Index(m));
    if (g.nodes_[a.id].requires_grad) {
      ConstMat mb(g.val(b.id).data().data(), Eigen::Index(k), Eigen::Index(m));
      Mat(g.acc(a.id).data(), Eigen::Index(n), Eigen::Index(k)).noalias() += dc * mb.transpose();
    }
    if (g.nodes_[b.id].requires_grad) {
      ConstMat ma(g.val(a.id).data().data(), Eigen::Index(n), Eigen::Index(k));
      Mat(g.acc(b.id).data(), Eigen::Index(k), Eigen::Index(m)).noalias() += ma.transpose() * dc;
    }
  };
  return push(std::move(node));
}

Var Graph::add_row(Var x, Var bias) {
  const Tensor& X = val(x.id);
  const Tensor& b = val(bias.id);
  if (b.rows() != 1 || b.cols() != X.cols()) {
    throw DimensionError("add_row: bias " + shape_str(b.shape()) + " vs input " +
                         shape_str(X.shape()));
  }
  const std::size_t n = X.rows(), d = X.cols();
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = X.at(i, j) + b[j];
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[x.id].requires_grad || nodes_[bias.id].requires_grad;
  node.backward = [x, bias, n, d](Graph& g, std::size_t self) {
    const std::vector<double>& dy = g.nodes_[self].grad;
    if (g.nodes_[x.id].requires_grad) {
      auto dx = g.acc(x.id);
      for (std::size_t i = 0; i < n * d; ++i) dx[i] += dy[i];
    }
    if (g.nodes_[bias.id].requires_grad) {
      auto db = g.acc(bias.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
    }
  };
  return push(std::move(node));
}

Var Graph::add(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same_shape(A, B, "add");
  Tensor out({A.rows(), A.cols()});
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  node.backward = [a, b](Graph& g, std::size_t self) {
    const std::vector<double>& dy = g.nodes_[self].grad;
    for (Var in : {a, b}) {
      if (!g.nodes_[in.id].requires_grad) continue;
      auto dx = g.acc(in.id);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    }
  };
  return push(std::move(node));
}

Var Graph::scale(Var x, double factor) {
  const Tensor& X = val(x.id);
  Tensor out({X.rows(), X.cols()});
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] * factor;
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[x.id].requires_grad;
  node.backward = [x, factor](Graph& g, std::size_t self) {
    const std::vector<double>& dy = g.nodes_[self].grad;
    auto dx = g.acc(x.id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
  };
  return push(std::move(node));
}

Var Graph::activation(Var x, Activation kind) {
  const Tensor& X = val(x.id);
  Tensor out({X.rows(), X.cols()});
  for (std::size_t i = 0; i < X.size(); ++i) {
    out[i] = kind == Activation::kRelu ? (X[i] > 0.0 ? X[i] : 0.0) : std::tanh(X[i]);
  }
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[x.id].requires_grad;
  node.backward = [x, kind](Graph& g, std::size_t self) {
    const Node& me = g.nodes_[self];
    const Tensor& X = g.val(x.id);
    auto dx = g.acc(x.id);
    for (std::size_t i = 0; i < me.grad.size(); ++i) {
      if (kind == Activation::kRelu) {
        // relu'(0) = 0
        if (X[i] > 0.0) dx[i] += me.grad[i];
      } else {
        const double y = me.value[i];
        dx[i] += me.grad[i] * (1.0 - y * y);
      }
    }
  };
  return push(std::move(node));
}

Var Graph::gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& T = val(table.id);
  const std::size_t d = T.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= T.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) +
                           " out of range for " + shape_str(T.shape()));
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = T.at(ids[i], j);
  }
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[table.id].requires_grad;
  node.backward = [table, d, ids = std::vector<std::size_t>(ids.begin(), ids.end())](
                      Graph& g, std::size_t self) {
    const std::vector<double>& dy = g.nodes_[self].grad;
    auto dt = g.acc(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) dt[ids[i] * d + j] += dy[i * d + j];
  };
  return push(std::move(node));
}

Var Graph::segment_mean(Var x, std::span<const std::size_t> offsets) {
  const Tensor& X = val(x.id);
  check_offsets(X, offsets);
  const std::size_t segs = offsets.size() - 1, d = X.cols();
  Tensor out({segs, d});
  for (std::size_t b = 0; b < segs; ++b) {
    const double inv = 1.0 / static_cast<double>(offsets[b + 1] - offsets[b]);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = offsets[b]; r < offsets[b + 1]; ++r) s += X.at(r, j);
      out.at(b, j) = s * inv;
    }
  }
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[x.id].requires_grad;
  node.backward = [x, d, off = std::vector<std::size_t>(offsets.begin(), offsets.end())](
                      Graph& g, std::size_t self) {
    const std::vector<double>& dy = g.nodes_[self].grad;
    auto dx = g.acc(x.id);
    for (std::size_t b = 0; b + 1 < off.size(); ++b) {
      const double inv = 1.0 / static_cast<double>(off[b + 1] - off[b]);
      for (std::size_t r = off[b]; r < off[b + 1]; ++r)
        for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += dy[b * d + j] * inv;
    }
  };
  return push(std::move(node));
}

Var Graph::segment_last(Var x, std::span<const std::size_t> offsets) {
  const Tensor& X = val(x.id);
  check_offsets(X, offsets);
  std::vector<std::size_t> last;
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) last.push_back(offsets[b + 1] - 1);
  return gather_rows(x, last);
}

Var Graph::l2_normalize_rows(Var x) {
  const Tensor& X = val(x.id);
  const std::size_t n = X.rows(), d = X.cols();
  Tensor out({n, d});
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += X.at(i, j) * X.at(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] > kNormEpsilon)) {
      throw DegenerateVectorError("row " + std::to_string(i) + " has norm " +
                                  std::to_string(norms[i]) + " (collapsed representation?)");
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = X.at(i, j) / norms[i];
  }
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[x.id].requires_grad;
  node.backward = [x, n, d, norms = std::move(norms)](Graph& g, std::size_t self) {
    const Node& me = g.nodes_[self];
    auto dx = g.acc(x.id);
    for (std::size_t i = 0; i < n; ++i) {
      double proj = 0.0;
      for (std::size_t j = 0; j < d; ++j) proj += me.value.at(i, j) * me.grad[i * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        dx[i * d + j] += (me.grad[i * d + j] - me.value.at(i, j) * proj) / norms[i];
      }
    }
  };
  return push(std::move(node));
}

Var Graph::rowwise_dot(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same_shape(A, B, "rowwise_dot");
  const std::size_t n = A.rows(), d = A.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += A.at(i, j) * B.at(i, j);
    out[i] = s;
  }
  Node node;
  node.value = std::move(out);
  node.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  node.backward = [a, b, n, d](Graph& g, std::size_t self) {
    const std::vector<double>& dy = g.nodes_[self].grad;
    if (g.nodes_[a.id].requires_grad) {
      const Tensor& B = g.val(b.id);
      auto da = g.acc(a.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) da[i * d + j] += dy[i] * B.at(i, j);
    }
    if (g.nodes_[b.id].requires_grad) {
      const Tensor& A = g.val(a.id);
      auto db = g.acc(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) db[i * d + j] += dy[i] * A.at(i, j);
    }
  };
  return push(std::move(node));
}

Var Graph::sum(Var x) {
  const Tensor& X = val(x.id);
  double s = 0.0;
  for (double v : X.data()) s += v;
  Node node;
  node.value = Tensor::matrix(1, 1, {s});
  node.requires_grad = nodes_[x.id].requires_grad;
  node.backward = [x](Graph& g, std::size_t self) {
    const double dy = g.nodes_[self].grad[0];
    auto dx = g.acc(x.id);
    for (double& v : dx) v += dy;
  };
  return push(std::move(node));
}

Var Graph::mean(Var x) {
  const double n = static_cast<double>(val(x.id).size());
  if (n == 0) throw EmptyInputError("mean of an empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var Graph::softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& L = val(logits.id);
  const std::size_t n = L.rows(), k = L.cols();
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(L.shape()));
  }
  if (n == 0) throw EmptyInputError("softmax_cross_entropy on zero rows");
  std::vector<double> probs(n * k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) {
      throw DimensionError("label " + std::to_string(labels[i]) + " outside " +
                           std::to_string(k) + " classes");
    }
    double mx = L.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, L.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(L.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(L.at(i, j) - lse);
    total += lse - L.at(i, labels[i]);
  }
  Node node;
  node.value = Tensor::matrix(1, 1, {total / static_cast<double>(n)});
  node.requires_grad = nodes_[logits.id].requires_grad;
  node.backward = [logits, n, k, probs = std::move(probs),
                   y = std::vector<std::size_t>(labels.begin(), labels.end())](
                      Graph& g, std::size_t self) {
    const double dy = g.nodes_[self].grad[0] / static_cast<double>(n);
    auto dl = g.acc(logits.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        dl[i * k + j] += dy * (probs[i * k + j] - (j == y[i] ? 1.0 : 0.0));
      }
  };
  return push(std::move(node));
}

Var Graph::detach(Var x) {
  const Tensor& X = val(x.id);
  Node node;
  node.value = Tensor::matrix(X.rows(), X.cols(),
                              std::vector<double>(X.data().begin(), X.data().end()));
  return push(std::move(node));
}

void Graph::backward(Var loss) {
  if (val(loss.id).size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " + shape_str(val(loss.id).shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id].requires_grad) return;
  acc(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (!n.param || !n.requires_grad) continue;
    auto pg = n.param->tensor.ensure_grad();
    if (n.grad.empty()) continue;
    for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
  }
}

}  // namespace ncre
