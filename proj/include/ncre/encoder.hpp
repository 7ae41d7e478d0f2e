#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ncre/graph.hpp"
#include "ncre/nn.hpp"
#include "ncre/rng.hpp"
#include "ncre/tensor.hpp"

namespace ncre {

struct TokenizerConfig {
  std::size_t vocab_size = 4096;
  bool lowercase = true;
};

using TokenIds = std::vector<std::size_t>;

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);

/// Whitespace split, optional ASCII lowercasing, then fnv1a(token) % vocab_size.
TokenIds tokenize(std::string_view text, const TokenizerConfig& cfg);

enum class Pooling { kMean, kLastToken };

std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view s);

struct EncoderConfig {
  std::size_t embed_dim = 128;
  std::size_t num_layers = 3;
  std::size_t hidden_dim = 128;
  Pooling pooling = Pooling::kMean;
  Activation activation = Activation::kTanh;
};

struct SentenceVector {
  Tensor values;
};

/// Stand-in sentence encoder: hashed token embeddings, a stack of per-token
/// (linear + activation) layers, then pooling over the sentence.
///
/// Parameter names are "<prefix>.embedding" and
/// "<prefix>.layer<i>.{weight,bias}" with i counted from 1.
class Encoder {
 public:
  Encoder() = default;
  /// Embedding ~ U(-1, 1); layers as in Linear.
  Encoder(const EncoderConfig& cfg, std::size_t vocab_size, Rng& rng,
          const std::string& prefix = "encoder");

  /// One pooled row per sentence: [batch x output_dim()].
  Var forward(Graph& g, const std::vector<TokenIds>& batch);
  SentenceVector encode(const TokenIds& tokens);

  /// Freezes the embedding and every layer except the final one, which is
  /// left trainable.
  void freeze_all_but_last();
  void freeze_all();
  /// Renames every parameter under a new prefix.
  void set_prefix(const std::string& prefix);

  std::size_t output_dim() const;
  std::size_t vocab_size() const { return embedding.tensor.rows(); }
  const EncoderConfig& config() const { return cfg_; }
  ParameterRefs parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter embedding;
  std::vector<Linear> layers;

 private:
  EncoderConfig cfg_;
};

}  // namespace ncre
