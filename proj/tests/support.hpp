#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncre/config.hpp"
#include "ncre/pipeline.hpp"
#include "ncre/rng.hpp"
#include "ncre/tensor.hpp"

namespace ncre::testing {

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t({r, c});
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline Parameter random_param(const std::string& name, std::size_t r, std::size_t c, Rng& rng) {
  return Parameter{name, random_matrix(r, c, rng), false};
}

/// Small network and data sizes so a full staged run takes well under a second.
inline RunConfig tiny_config(std::uint64_t seed = 7) {
  RunConfig cfg;
  cfg.pipeline.seed = seed;
  cfg.tokenizer.vocab_size = 256;
  cfg.encoder.embed_dim = 12;
  cfg.encoder.hidden_dim = 12;
  cfg.encoder.num_layers = 2;
  cfg.byol.projector_hidden = 10;
  cfg.byol.projector_out = 6;
  cfg.byol.predictor_hidden = 10;
  cfg.byol.epochs = 3;
  cfg.pipeline.stage1_epochs = 2;
  cfg.pipeline.stage3_epochs = 5;
  cfg.pipeline.joint_epochs = 3;
  cfg.pipeline.batch_size = 16;
  cfg.synth = true;
  cfg.synth_cfg.num_classes = 4;
  cfg.synth_cfg.per_class = 30;
  cfg.synth_cfg.vocab_per_class = 10;
  return cfg;
}

inline PreparedData synth_data(const RunConfig& cfg) {
  SynthConfig sc = cfg.synth_cfg;
  sc.seed = cfg.pipeline.seed;
  DatasetSplit split = split_equal(synth_generate(sc), cfg.pipeline.seed);
  return prepare_data(split, synth_label_table(sc.num_classes), cfg.tokenizer);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ncre_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<TokenIds> random_batch(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<TokenIds> out(n);
  for (TokenIds& s : out) {
    const std::size_t len = 1 + rng.below(5);
    for (std::size_t i = 0; i < len; ++i) s.push_back(rng.below(vocab));
  }
  return out;
}

}  // namespace ncre::testing
