#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ncre/encoder.hpp"
#include "ncre/graph.hpp"
#include "ncre/nn.hpp"
#include "ncre/optim.hpp"
#include "ncre/pairing.hpp"

namespace ncre {

enum class RepresentationTap { kProjector, kEncoder };

std::string_view to_string(RepresentationTap t);
RepresentationTap parse_tap(std::string_view s);

struct ByolConfig {
  std::size_t projector_hidden = 64;
  std::size_t projector_out = 32;
  std::size_t predictor_hidden = 64;
  /// EMA momentum of the target network.
  double delta = 0.99;
  double learning_rate = 0.2;
  std::size_t epochs = 15;
  Activation activation = Activation::kRelu;
  RepresentationTap tap = RepresentationTap::kProjector;

  // Ablation switches. Without stop-gradient the target branch is evaluated
  // with the online weights and differentiated (weight sharing, i.e. the
  // delta = 0 target); without the predictor the online branch ends at the
  // projector.
  bool stop_gradient = true;
  bool use_predictor = true;
};

struct OnlineNetwork {
  Encoder encoder;
  Mlp projector;
  Mlp predictor;
};

struct TargetNetwork {
  Encoder encoder;
  Mlp projector;
};

/// Online network (encoder, projector, predictor) and its EMA target
/// (encoder, projector). Parameter names carry "online." / "target." prefixes.
class NetworkPair {
 public:
  /// Online encoder is a copy of `encoder` (frozen flags kept), projector and
  /// predictor are drawn from `seed`, and the target starts as an exact copy
  /// of the online encoder and projector.
  static NetworkPair init(const Encoder& encoder, const ByolConfig& cfg, std::uint64_t seed);

  ParameterRefs online_parameters();
  ParameterRefs target_parameters();
  /// Online parameters an optimizer step may touch (excludes the predictor
  /// when it is disabled).
  ParameterRefs trainable_parameters();
  /// Online then target parameters, checkpoint order.
  std::vector<const Parameter*> all_parameters() const;
  ParameterRefs all_parameters();

  void freeze_all();

  /// Online representation handed downstream: projector output, or the
  /// encoder output when the tap says so.
  Var represent(Graph& g, const std::vector<TokenIds>& batch);
  /// predictor(projector(encoder(x))), or projector output when the predictor
  /// is disabled.
  Var online_prediction(Graph& g, const std::vector<TokenIds>& batch);
  /// projector(encoder(x)) on the target weights.
  Var target_projection(Graph& g, const std::vector<TokenIds>& batch);

  std::size_t representation_dim() const;

  OnlineNetwork online;
  TargetNetwork target;
  ByolConfig cfg;
};

/// xi <- delta * xi + (1 - delta) * theta for every corresponding parameter,
/// evaluated as std::lerp(xi, theta, 1 - delta): delta = 1 leaves xi as is,
/// delta = 0 copies theta, and equal values stay put.
void ema_update(NetworkPair& pair);

/// Symmetrised loss on aligned batches, stop-gradient on the target side.
Var byol_loss(Graph& g, NetworkPair& pair, const std::vector<TokenIds>& x1,
              const std::vector<TokenIds>& x2);
double byol_loss(NetworkPair& pair, const TokenIds& x1, const TokenIds& x2);

/// One step: mean pair loss, backprop into online parameters, one optimizer
/// step, then an EMA update. Returns the loss measured before the step.
/// A degenerate representation aborts the step with CollapseError.
double train_step(NetworkPair& pair, const PairBatch& batch,
                  const std::vector<TokenIds>& samples, OptimizerState& opt);

SentenceVector represent(NetworkPair& pair, const TokenIds& sample);
/// represent() for many samples, one row each.
Tensor represent_all(NetworkPair& pair, const std::vector<TokenIds>& samples,
                     std::size_t chunk = 256);

}  // namespace ncre
