#include "ncre/byol.hpp"

#include <cmath>
#include <string>

#include "ncre/errors.hpp"
#include "ncre/losses.hpp"
#include "ncre/metrics.hpp"

namespace ncre {

std::string_view to_string(RepresentationTap t) {
  return t == RepresentationTap::kProjector ? "projector" : "encoder";
}

RepresentationTap parse_tap(std::string_view s) {
  if (s == "projector") return RepresentationTap::kProjector;
  if (s == "encoder") return RepresentationTap::kEncoder;
  throw ConfigError("unknown representation tap '" + std::string(s) +
                    "' (expected projector|encoder)");
}

NetworkPair NetworkPair::init(const Encoder& encoder, const ByolConfig& cfg, std::uint64_t seed) {
  if (!(cfg.delta >= 0.0 && cfg.delta <= 1.0)) {
    throw ConfigError("EMA delta must lie in [0, 1], got " + std::to_string(cfg.delta));
  }
  NetworkPair p;
  p.cfg = cfg;
  p.online.encoder = encoder;
  p.online.encoder.set_prefix("online.encoder");
  clear_grads(p.online.encoder.parameters());
  Rng rng(seed);
  p.online.projector =
      Mlp("online.projector", {encoder.output_dim(), cfg.projector_hidden, cfg.projector_out},
          cfg.activation, false, rng);
  p.online.predictor =
      Mlp("online.predictor", {cfg.projector_out, cfg.predictor_hidden, cfg.projector_out},
          cfg.activation, false, rng);
  p.target.encoder = p.online.encoder;
  p.target.encoder.set_prefix("target.encoder");
  p.target.projector = p.online.projector;
  p.target.projector.set_prefix("target.projector");
  return p;
}

ParameterRefs NetworkPair::online_parameters() {
  ParameterRefs out = online.encoder.parameters();
  for (Parameter* q : online.projector.parameters()) out.push_back(q);
  for (Parameter* q : online.predictor.parameters()) out.push_back(q);
  return out;
}

ParameterRefs NetworkPair::target_parameters() {
  ParameterRefs out = target.encoder.parameters();
  for (Parameter* q : target.projector.parameters()) out.push_back(q);
  return out;
}

ParameterRefs NetworkPair::trainable_parameters() {
  ParameterRefs out = online.encoder.parameters();
  for (Parameter* q : online.projector.parameters()) out.push_back(q);
  if (cfg.use_predictor) {
    for (Parameter* q : online.predictor.parameters()) out.push_back(q);
  }
  return out;
}

ParameterRefs NetworkPair::all_parameters() {
  ParameterRefs out = online_parameters();
  for (Parameter* q : target_parameters()) out.push_back(q);
  return out;
}

std::vector<const Parameter*> NetworkPair::all_parameters() const {
  std::vector<const Parameter*> out = online.encoder.parameters();
  for (const auto& part : {online.projector.parameters(), online.predictor.parameters(),
                           target.encoder.parameters(), target.projector.parameters()}) {
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void NetworkPair::freeze_all() { set_frozen(all_parameters(), true); }

std::size_t NetworkPair::representation_dim() const {
  return cfg.tap == RepresentationTap::kProjector ? online.projector.out_dim()
                                                  : online.encoder.output_dim();
}

Var NetworkPair::represent(Graph& g, const std::vector<TokenIds>& batch) {
  Var x = online.encoder.forward(g, batch);
  if (cfg.tap == RepresentationTap::kEncoder) return x;
  return online.projector.forward(g, x);
}

Var NetworkPair::online_prediction(Graph& g, const std::vector<TokenIds>& batch) {
  Var x = online.projector.forward(g, online.encoder.forward(g, batch));
  return cfg.use_predictor ? online.predictor.forward(g, x) : x;
}

Var NetworkPair::target_projection(Graph& g, const std::vector<TokenIds>& batch) {
  return target.projector.forward(g, target.encoder.forward(g, batch));
}

void ema_update(NetworkPair& pair) {
  ParameterRefs online = pair.online.encoder.parameters();
  for (Parameter* q : pair.online.projector.parameters()) online.push_back(q);
  const ParameterRefs target = pair.target_parameters();
  if (online.size() != target.size()) {
    throw ContractError("online and target networks have different parameter counts");
  }
  const double t = 1.0 - pair.cfg.delta;
  for (std::size_t i = 0; i < online.size(); ++i) {
    if (online[i]->tensor.shape() != target[i]->tensor.shape()) {
      throw ContractError("EMA shape mismatch: '" + online[i]->name + "' " +
                          shape_str(online[i]->tensor.shape()) + " vs '" + target[i]->name +
                          "' " + shape_str(target[i]->tensor.shape()));
    }
    auto theta = online[i]->tensor.data();
    auto xi = target[i]->tensor.data();
    for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = std::lerp(xi[j], theta[j], t);
  }
}

namespace {

Var target_side(Graph& g, NetworkPair& pair, const std::vector<TokenIds>& batch) {
  if (!pair.cfg.stop_gradient) {
    return pair.online.projector.forward(g, pair.online.encoder.forward(g, batch));
  }
  Graph detached(Graph::kNoGrad);
  return g.constant(detached.value(pair.target_projection(detached, batch)));
}

}  // namespace

Var byol_loss(Graph& g, NetworkPair& pair, const std::vector<TokenIds>& x1,
              const std::vector<TokenIds>& x2) {
  if (x1.size() != x2.size()) {
    throw DimensionError("byol_loss: " + std::to_string(x1.size()) + " vs " +
                         std::to_string(x2.size()) + " samples");
  }
  Var z1 = pair.online_prediction(g, x1);
  Var z2 = pair.online_prediction(g, x2);
  Var h1 = target_side(g, pair, x1);
  Var h2 = target_side(g, pair, x2);
  return symmetric_pair_loss(g, z1, h2, z2, h1);
}

double byol_loss(NetworkPair& pair, const TokenIds& x1, const TokenIds& x2) {
  Graph g(Graph::kNoGrad);
  return g.scalar(byol_loss(g, pair, {x1}, {x2}));
}

namespace {

[[noreturn]] void abort_collapsed(NetworkPair& pair, const std::vector<TokenIds>& batch,
                                  const std::string& why) {
  Tensor reps = represent_all(pair, batch);
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < reps.cols(); ++j) s += reps.at(i, j) * reps.at(i, j);
    if (!(std::sqrt(s) > Graph::kNormEpsilon)) ++degenerate;
  }
  double rank = 1.0;
  if (reps.rows() >= 2) {
    try {
      rank = effective_rank(reps);
    } catch (const Error&) {
    }
  }
  throw CollapseError("non-contrastive step aborted: " + why, rank, degenerate);
}

}  // namespace

double train_step(NetworkPair& pair, const PairBatch& batch, const std::vector<TokenIds>& samples,
                  OptimizerState& opt) {
  std::vector<TokenIds> a, b;
  a.reserve(batch.size());
  b.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    a.push_back(samples.at(batch.batch_a[i]));
    b.push_back(samples.at(batch.batch_b[i]));
  }
  Graph g;
  Var loss;
  try {
    loss = byol_loss(g, pair, a, b);
  } catch (const DegenerateVectorError& e) {
    abort_collapsed(pair, a, e.what());
  }
  const double value = g.scalar(loss);
  if (!std::isfinite(value)) abort_collapsed(pair, a, "loss is not finite");
  g.backward(loss);
  sgd_step(pair.trainable_parameters(), opt);
  ema_update(pair);
  return value;
}

SentenceVector represent(NetworkPair& pair, const TokenIds& sample) {
  Graph g(Graph::kNoGrad);
  const Tensor& out = g.value(pair.represent(g, {sample}));
  return SentenceVector{Tensor::vector(std::vector<double>(out.data().begin(), out.data().end()))};
}

Tensor represent_all(NetworkPair& pair, const std::vector<TokenIds>& samples, std::size_t chunk) {
  const std::size_t d = pair.representation_dim();
  Tensor out({samples.size(), d});
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<TokenIds> part(samples.begin() + static_cast<std::ptrdiff_t>(start),
                               samples.begin() + static_cast<std::ptrdiff_t>(end));
    Graph g(Graph::kNoGrad);
    const Tensor& r = g.value(pair.represent(g, part));
    std::copy(r.data().begin(), r.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * d));
  }
  return out;
}

}  // namespace ncre
