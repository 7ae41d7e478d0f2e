#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ncre/byol.hpp"
#include "ncre/errors.hpp"
#include "ncre/graph.hpp"
#include "ncre/losses.hpp"
#include "support.hpp"

using namespace ncre;

namespace {

SentenceVector sv(std::vector<double> v) { return SentenceVector{Tensor::vector(std::move(v))}; }

SentenceVector random_sv(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return sv(v);
}

// Straight-line reimplementation of the networks, independent of Graph.
using Vec = std::vector<double>;

Vec affine(const Vec& x, const Parameter& w, const Parameter& b) {
  const std::size_t in = w.tensor.rows(), out = w.tensor.cols();
  Vec y(out);
  for (std::size_t j = 0; j < out; ++j) {
    double s = b.tensor[j];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w.tensor.at(i, j);
    y[j] = s;
  }
  return y;
}

Vec encoder_ref(const Encoder& e, const TokenIds& ids) {
  const std::size_t d = e.output_dim();
  Vec pooled(d, 0.0);
  for (std::size_t id : ids) {
    Vec x(e.embedding.tensor.cols());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = e.embedding.tensor.at(id, j);
    for (const Linear& l : e.layers) {
      x = affine(x, l.weight, l.bias);
      for (double& v : x) v = std::tanh(v);
    }
    for (std::size_t j = 0; j < d; ++j) pooled[j] += x[j];
  }
  for (double& v : pooled) v /= static_cast<double>(ids.size());
  return pooled;
}

Vec mlp_ref(const Mlp& m, Vec x) {
  const auto& ls = m.layers();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    x = affine(x, ls[i].weight, ls[i].bias);
    if (i + 1 < ls.size())
      for (double& v : x) v = std::max(0.0, v);
  }
  return x;
}

double neg_cos(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return -ab / (std::sqrt(aa) * std::sqrt(bb));
}

NetworkPair tiny_pair(std::uint64_t seed) {
  Rng rng(seed);
  EncoderConfig ec;
  ec.embed_dim = 4;
  ec.hidden_dim = 4;
  ec.num_layers = 2;
  Encoder enc(ec, 30, rng);
  ByolConfig bc;
  bc.projector_hidden = 5;
  bc.projector_out = 4;
  bc.predictor_hidden = 5;
  NetworkPair pair = NetworkPair::init(enc, bc, seed + 1);
  for (Parameter* p : pair.online_parameters())
    if (p->name.ends_with(".bias"))
      for (double& v : p->tensor.data()) v = rng.normal();
  // Give the target its own weights so the two paths differ.
  for (Parameter* p : pair.target_parameters())
    for (double& v : p->tensor.data()) v += 0.3 * rng.normal();
  return pair;
}

}  // namespace

TEST_CASE("Eq. 1 examples") {
  CHECK(d_loss(sv({1, 0}), sv({0, 1})) == doctest::Approx(0.0));
  CHECK(d_loss(sv({1, 0}), sv({-2, 0})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(d_loss(sv({0, 0}), sv({1, 0})), DegenerateVectorError);
  CHECK_THROWS_AS(d_loss(sv({1, 0}), sv({1, 0, 0})), DimensionError);
}

TEST_CASE("Eq. 1 range, self-alignment and scale invariance on 1000 pairs") {
  Rng rng(21);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 2 + rng.below(30);
    SentenceVector z = random_sv(d, rng), h = random_sv(d, rng);
    const double v = d_loss(z, h);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    CHECK(std::abs(d_loss(z, z) + 1.0) <= 1e-12);
    const double a = std::exp(rng.uniform(-5, 5)), b = std::exp(rng.uniform(-5, 5));
    SentenceVector za = z, hb = h;
    for (double& x : za.values.data()) x *= a;
    for (double& x : hb.values.data()) x *= b;
    CHECK(std::abs(d_loss(za, hb) - v) <= 1e-12);
  }
}

TEST_CASE("Eq. 2 exchange symmetry and term-by-term oracle on 100 tiny networks") {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    NetworkPair pair = tiny_pair(1000 + t);
    auto xs = ncre::testing::random_batch(2, 30, rng);
    const double ab = byol_loss(pair, xs[0], xs[1]);
    const double ba = byol_loss(pair, xs[1], xs[0]);
    CHECK(std::abs(ab - ba) <= 1e-12);

    const Vec z1 = mlp_ref(pair.online.predictor,
                           mlp_ref(pair.online.projector, encoder_ref(pair.online.encoder, xs[0])));
    const Vec z2 = mlp_ref(pair.online.predictor,
                           mlp_ref(pair.online.projector, encoder_ref(pair.online.encoder, xs[1])));
    const Vec h1 = mlp_ref(pair.target.projector, encoder_ref(pair.target.encoder, xs[0]));
    const Vec h2 = mlp_ref(pair.target.projector, encoder_ref(pair.target.encoder, xs[1]));
    const double oracle = 0.5 * neg_cos(z1, h2) + 0.5 * neg_cos(z2, h1);
    CHECK(std::abs(ab - oracle) <= 1e-12);
  }
}

TEST_CASE("Eq. 2 reaches -1 when both paths agree on identical inputs") {
  NetworkPair pair = tiny_pair(5);
  pair.cfg.use_predictor = false;
  for (Parameter* p : pair.target_parameters()) {
    for (Parameter* q : pair.online_parameters()) {
      if (q->name.substr(q->name.find('.')) == p->name.substr(p->name.find('.'))) p->tensor = q->tensor;
    }
  }
  TokenIds x{1, 2, 3};
  CHECK(byol_loss(pair, x, x) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("stop-gradient: target parameters receive no gradient") {
  NetworkPair pair = tiny_pair(9);
  Rng rng(4);
  auto a = ncre::testing::random_batch(3, 30, rng), b = ncre::testing::random_batch(3, 30, rng);
  Graph g;
  g.backward(byol_loss(g, pair, a, b));
  for (Parameter* p : pair.target_parameters()) {
    if (!p->tensor.has_grad()) continue;
    for (double v : p->tensor.grad()) CHECK(v == 0.0);
  }
  bool online_moved = false;
  for (Parameter* p : pair.online.predictor.parameters())
    if (p->tensor.has_grad())
      for (double v : p->tensor.grad()) online_moved |= v != 0.0;
  CHECK(online_moved);
}

TEST_CASE("Eq. 4 examples and contracts") {
  Tensor y({1, 28}), uniform({1, 28}, 1.0 / 28.0);
  y.at(0, 3) = 1.0;
  CHECK(cross_entropy(y, uniform) == doctest::Approx(std::log(28.0)).epsilon(1e-12));
  CHECK(cross_entropy(y, y) == 0.0);
  Tensor bad = uniform;
  bad.at(0, 0) += 1e-6;
  CHECK_THROWS_AS(cross_entropy(y, bad), ContractError);
  Tensor not_one_hot({1, 28}, 0.0);
  not_one_hot.at(0, 1) = 0.5;
  not_one_hot.at(0, 2) = 0.5;
  CHECK_THROWS_AS(cross_entropy(not_one_hot, uniform), ContractError);
}

TEST_CASE("Eq. 4 logits form matches the direct formula") {
  Rng rng(23);
  Tensor logits = ncre::testing::random_matrix(5, 4, rng, 3.0);
  std::vector<std::size_t> labels{0, 3, 1, 1, 2};
  double direct = 0.0;
  Tensor probs({5, 4}), onehot({5, 4});
  for (std::size_t i = 0; i < 5; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < 4; ++k) z += std::exp(logits.at(i, k));
    direct -= std::log(std::exp(logits.at(i, labels[i])) / z);
    for (std::size_t k = 0; k < 4; ++k) probs.at(i, k) = std::exp(logits.at(i, k)) / z;
    onehot.at(i, labels[i]) = 1.0;
  }
  direct /= 5.0;
  Graph g;
  CHECK(g.scalar(cross_entropy_logits(g, g.constant(logits), labels)) ==
        doctest::Approx(direct).epsilon(1e-12));
  CHECK(cross_entropy(onehot, probs) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("Eq. 5 weighting") {
  CHECK(total_loss(1.5, -0.5, 0.0) == 1.5);
  CHECK(total_loss(1.5, -0.5, 2.0) == 0.5);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), ContractError);
}
