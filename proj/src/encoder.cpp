#include "ncre/encoder.hpp"

#include <cctype>

#include "ncre/errors.hpp"

namespace ncre {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TokenIds tokenize(std::string_view text, const TokenizerConfig& cfg) {
  if (cfg.vocab_size < 2) throw ConfigError("tokenizer vocab_size must be at least 2");
  TokenIds ids;
  std::size_t i = 0;
  std::string tok;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    tok.clear();
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      const char c = text[i++];
      tok.push_back(cfg.lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                                  : c);
    }
    if (!tok.empty()) ids.push_back(static_cast<std::size_t>(fnv1a(tok) % cfg.vocab_size));
  }
  return ids;
}

std::string_view to_string(Pooling p) { return p == Pooling::kMean ? "mean" : "last_token"; }

Pooling parse_pooling(std::string_view s) {
  if (s == "mean") return Pooling::kMean;
  if (s == "last_token") return Pooling::kLastToken;
  throw ConfigError("unknown pooling '" + std::string(s) + "' (expected mean|last_token)");
}

Encoder::Encoder(const EncoderConfig& cfg, std::size_t vocab_size, Rng& rng,
                 const std::string& prefix)
    : cfg_(cfg) {
  if (cfg.embed_dim == 0 || cfg.hidden_dim == 0 || vocab_size == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  embedding.name = prefix + ".embedding";
  embedding.tensor = Tensor({vocab_size, cfg.embed_dim});
  for (double& v : embedding.tensor.data()) v = rng.uniform(-1.0, 1.0);
  std::size_t in = cfg.embed_dim;
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    layers.emplace_back(prefix + ".layer" + std::to_string(i + 1), in, cfg.hidden_dim, rng);
    in = cfg.hidden_dim;
  }
}

std::size_t Encoder::output_dim() const {
  return layers.empty() ? embedding.tensor.cols() : layers.back().out_dim();
}

Var Encoder::forward(Graph& g, const std::vector<TokenIds>& batch) {
  if (batch.empty()) throw EmptyInputError("encode: empty batch");
  TokenIds flat;
  std::vector<std::size_t> offsets{0};
  for (const TokenIds& s : batch) {
    if (s.empty()) throw EmptyInputError("encode: sentence has no tokens");
    flat.insert(flat.end(), s.begin(), s.end());
    offsets.push_back(flat.size());
  }
  Var x = g.gather_rows(g.parameter(embedding), flat);
  for (Linear& layer : layers) x = g.activation(layer.forward(g, x), cfg_.activation);
  return cfg_.pooling == Pooling::kMean ? g.segment_mean(x, offsets) : g.segment_last(x, offsets);
}

SentenceVector Encoder::encode(const TokenIds& tokens) {
  Graph g(Graph::kNoGrad);
  const Tensor& out = g.value(forward(g, {tokens}));
  return SentenceVector{Tensor::vector(std::vector<double>(out.data().begin(), out.data().end()))};
}

void Encoder::freeze_all_but_last() {
  if (layers.empty()) {
    throw ContractError("freeze_all_but_last: encoder has no layers, nothing would stay trainable");
  }
  embedding.frozen = true;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    set_frozen(layers[i].parameters(), i + 1 < layers.size());
  }
}

void Encoder::freeze_all() { set_frozen(parameters(), true); }

void Encoder::set_prefix(const std::string& prefix) {
  embedding.name = prefix + ".embedding";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i + 1);
    layers[i].weight.name = base + ".weight";
    layers[i].bias.name = base + ".bias";
  }
}

ParameterRefs Encoder::parameters() {
  ParameterRefs out{&embedding};
  for (Linear& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Encoder::parameters() const {
  std::vector<const Parameter*> out{&embedding};
  for (const Linear& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace ncre
