#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ncre/checkpoint.hpp"
#include "ncre/encoder.hpp"
#include "ncre/errors.hpp"
#include "ncre/graph.hpp"
#include "ncre/losses.hpp"
#include "ncre/nn.hpp"
#include "ncre/optim.hpp"
#include "support.hpp"

using namespace ncre;
using ncre::testing::random_matrix;
using ncre::testing::random_param;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;
constexpr int kInstances = 20;

}  // namespace

TEST_CASE("tensor shape helpers") {
  Tensor v = Tensor::vector({1, 2, 3});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 3);
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.at(1, 0) == 4);
  CHECK_THROWS_AS(Tensor::matrix(2, 2, {1, 2, 3}), DimensionError);
  CHECK(shape_str(m.shape()) == "[2x3]");
}

TEST_CASE("duplicate parameter names are rejected") {
  Parameter a{"w", Tensor({1, 1}), false}, b{"w", Tensor({1, 1}), false};
  CHECK_THROWS_AS(check_unique_names({&a, &b}), ContractError);
}

TEST_CASE("forward values match hand computation") {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = g.constant(Tensor::matrix(2, 1, {1, -1}));
  CHECK(g.value(g.matmul(a, b)) == Tensor::matrix(2, 1, {-1, -1}));
  Var x = g.constant(Tensor::matrix(1, 3, {-1, 0, 2}));
  CHECK(g.value(g.relu(x)) == Tensor::matrix(1, 3, {0, 0, 2}));
  Var s = g.segment_mean(g.constant(Tensor::matrix(3, 1, {1, 3, 5})), std::vector<std::size_t>{0, 2, 3});
  CHECK(g.value(s) == Tensor::matrix(2, 1, {2, 5}));
  Var l = g.segment_last(g.constant(Tensor::matrix(3, 1, {1, 3, 5})), std::vector<std::size_t>{0, 2, 3});
  CHECK(g.value(l) == Tensor::matrix(2, 1, {3, 5}));
  CHECK_THROWS_AS(g.matmul(a, x), DimensionError);
}

TEST_CASE("l2 normalisation rejects zero rows") {
  Graph g;
  Var z = g.constant(Tensor::matrix(2, 2, {1, 0, 0, 0}));
  CHECK_THROWS_AS(g.l2_normalize_rows(z), DegenerateVectorError);
}

TEST_CASE("softmax cross-entropy survives huge logits") {
  Graph g;
  Var logits = g.constant(Tensor::matrix(1, 2, {1000.0, -1000.0}));
  const double v = g.scalar(g.softmax_cross_entropy(logits, std::vector<std::size_t>{0}));
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("gradient oracle: elementwise and matrix ops") {
  Rng rng(11);
  for (int t = 0; t < kInstances; ++t) {
    Parameter a = random_param("a", 3, 4, rng), b = random_param("b", 4, 2, rng);
    Parameter bias = random_param("bias", 1, 2, rng), c = random_param("c", 3, 2, rng);
    ParameterRefs ps{&a, &b, &bias, &c};
    auto loss = [&](Graph& g) {
      Var y = g.add_row(g.matmul(g.parameter(a), g.parameter(b)), g.parameter(bias));
      y = g.add(g.tanh(y), g.scale(g.relu(g.parameter(c)), 0.7));
      return g.sum(g.rowwise_dot(y, g.parameter(c)));
    };
    CHECK(finite_difference_check(ps, loss, kStep) < kTol);
  }
}

TEST_CASE("gradient oracle: gather, pooling, normalisation") {
  Rng rng(12);
  for (int t = 0; t < kInstances; ++t) {
    Parameter table = random_param("table", 6, 3, rng);
    Parameter probe = random_param("probe", 2, 3, rng);
    std::vector<std::size_t> ids{0, 5, 2, 2, 4};
    std::vector<std::size_t> offsets{0, 3, 5};
    ParameterRefs ps{&table, &probe};
    auto loss = [&](Graph& g) {
      Var x = g.gather_rows(g.parameter(table), ids);
      Var m = g.add(g.segment_mean(x, offsets), g.segment_last(x, offsets));
      Var n = g.l2_normalize_rows(m);
      return g.mean(g.rowwise_dot(n, g.parameter(probe)));
    };
    CHECK(finite_difference_check(ps, loss, kStep) < kTol);
  }
}

TEST_CASE("gradient oracle: Linear, Mlp and Encoder layers") {
  Rng rng(13);
  for (int t = 0; t < kInstances; ++t) {
    EncoderConfig ec;
    ec.embed_dim = 4;
    ec.hidden_dim = 5;
    ec.num_layers = 2;
    ec.pooling = t % 2 ? Pooling::kMean : Pooling::kLastToken;
    Encoder enc(ec, 20, rng);
    Mlp mlp("mlp", {5, 4, 3}, Activation::kRelu, false, rng);
    Linear lin("lin", 3, 2, rng);
    auto batch = ncre::testing::random_batch(3, 20, rng);
    ParameterRefs ps = enc.parameters();
    for (Parameter* p : mlp.parameters()) ps.push_back(p);
    for (Parameter* p : lin.parameters()) ps.push_back(p);
    auto loss = [&](Graph& g) {
      return g.sum(g.tanh(lin.forward(g, mlp.forward(g, enc.forward(g, batch)))));
    };
    CHECK(finite_difference_check(ps, loss, kStep) < kTol);
  }
}

TEST_CASE("gradient oracle: Eq. 1, 2, 4 and 5 losses") {
  Rng rng(14);
  for (int t = 0; t < kInstances; ++t) {
    Parameter z1 = random_param("z1", 4, 3, rng), h2 = random_param("h2", 4, 3, rng);
    Parameter z2 = random_param("z2", 4, 3, rng), h1 = random_param("h1", 4, 3, rng);
    Parameter logits = random_param("logits", 4, 5, rng);
    std::vector<std::size_t> y{0, 4, 2, 2};
    ParameterRefs ps{&z1, &h2, &z2, &h1, &logits};
    const double lambda = 0.1 * t;
    auto eq1 = [&](Graph& g) { return d_loss(g, g.parameter(z1), g.parameter(h2)); };
    auto eq2 = [&](Graph& g) {
      return symmetric_pair_loss(g, g.parameter(z1), g.parameter(h2), g.parameter(z2),
                                 g.parameter(h1));
    };
    auto eq4 = [&](Graph& g) { return cross_entropy_logits(g, g.parameter(logits), y); };
    auto eq5 = [&](Graph& g) { return total_loss(g, eq4(g), eq2(g), lambda); };
    CHECK(finite_difference_check({&z1, &h2}, eq1, kStep) < kTol);
    CHECK(finite_difference_check({&z1, &h2, &z2, &h1}, eq2, kStep) < kTol);
    CHECK(finite_difference_check({&logits}, eq4, kStep) < kTol);
    CHECK(finite_difference_check(ps, eq5, kStep) < kTol);
  }
}

TEST_CASE("shared parameter accumulates gradient from every use") {
  Parameter w{"w", Tensor::matrix(1, 1, {3.0}), false};
  Graph g;
  Var a = g.parameter(w), b = g.parameter(w);
  g.backward(g.sum(g.rowwise_dot(a, b)));
  CHECK(w.tensor.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("no-grad graph records nothing and detach blocks gradient") {
  Parameter w{"w", Tensor::matrix(1, 2, {1.0, 2.0}), false};
  {
    Graph g(Graph::kNoGrad);
    Var y = g.sum(g.parameter(w));
    CHECK_FALSE(g.requires_grad(y));
  }
  Graph g;
  Var y = g.sum(g.detach(g.parameter(w)));
  g.backward(y);
  CHECK_FALSE(w.tensor.has_grad());
}

TEST_CASE("sgd descends, skips frozen parameters and demands gradients") {
  Parameter w{"w", Tensor::matrix(1, 1, {1.0}), false};
  Parameter f{"f", Tensor::matrix(1, 1, {1.0}), true};
  OptimizerState opt{0.1, 0.0, {}, 0};
  Graph g;
  g.backward(g.sum(g.add(g.parameter(w), g.parameter(f))));
  sgd_step({&w, &f}, opt);
  CHECK(w.tensor[0] == doctest::Approx(0.9));
  CHECK(f.tensor[0] == 1.0);
  CHECK_FALSE(w.tensor.has_grad());
  CHECK(opt.step_count == 1);
  CHECK_THROWS_AS(sgd_step({&w}, opt), ContractError);
}

TEST_CASE("heavy-ball momentum accumulates velocity") {
  Parameter w{"w", Tensor::matrix(1, 1, {0.0}), false};
  OptimizerState opt{1.0, 0.5, {}, 0};
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(g.sum(g.parameter(w)));
    sgd_step({&w}, opt);
  }
  // v1 = 1, v2 = 0.5 + 1
  CHECK(w.tensor[0] == doctest::Approx(-2.5));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(3);
  Parameter a = random_param("enc.w", 3, 4, rng);
  Parameter b{"enc.b", Tensor::vector({1e-300, -0.0, 1.0 / 3.0}), true};
  const std::string bytes = encode_checkpoint({&a, &b});
  auto back = decode_checkpoint(bytes);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "enc.w");
  CHECK(back[0].tensor == a.tensor);
  CHECK(back[1].tensor == b.tensor);
  CHECK(back[1].frozen);
  CHECK(std::signbit(back[1].tensor[1]));

  const auto dir = ncre::testing::scratch_dir("ckpt");
  write_checkpoint(dir / "c.bin", {&a, &b});
  CHECK(read_checkpoint(dir / "c.bin")[0].tensor == a.tensor);
}

TEST_CASE("checkpoint rejects bad magic, truncation and foreign versions") {
  Parameter a{"w", Tensor::matrix(1, 2, {1, 2}), false};
  std::string bytes = encode_checkpoint({&a});
  CHECK_THROWS_AS(decode_checkpoint("NOTACKPT" + bytes.substr(8)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  std::string v2 = bytes;
  v2[8] = 2;
  CHECK_THROWS_WITH_AS(decode_checkpoint(v2), doctest::Contains("version"), CheckpointError);
}

TEST_CASE("restore_parameters checks names and shapes") {
  Parameter a{"w", Tensor::matrix(1, 2, {1, 2}), true};
  auto saved = decode_checkpoint(encode_checkpoint({&a}));
  Parameter same{"w", Tensor({1, 2}), false};
  restore_parameters(saved, {&same});
  CHECK(same.tensor == a.tensor);
  CHECK(same.frozen);
  Parameter other_shape{"w", Tensor({2, 1}), false};
  CHECK_THROWS_AS(restore_parameters(saved, {&other_shape}), DimensionError);
  Parameter missing{"v", Tensor({1, 2}), false};
  CHECK_THROWS_AS(restore_parameters(saved, {&missing}), CheckpointError);
}
