#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "ncre/byol.hpp"
#include "ncre/data.hpp"
#include "ncre/encoder.hpp"

namespace ncre {

enum class TrainMode { kStaged, kJoint };

std::string_view to_string(TrainMode m);
TrainMode parse_mode(std::string_view s);

inline constexpr std::uint64_t kDefaultSeed = 7;

struct PipelineConfig {
  std::size_t stage1_epochs = 3;
  std::size_t stage3_epochs = 10;
  double stage1_lr = 0.5;
  double stage3_lr = 4.0;
  std::size_t joint_epochs = 15;
  double joint_lr = 0.05;
  double momentum = 0.0;
  std::size_t batch_size = 64;
  /// Weight of the non-contrastive term in joint mode.
  double lambda = 1.0;
  std::uint64_t seed = kDefaultSeed;
  TrainMode mode = TrainMode::kStaged;
};

/// Everything a run needs. Stage-2 epochs, learning rate and EMA momentum
/// live in `byol`.
struct RunConfig {
  TokenizerConfig tokenizer;
  EncoderConfig encoder;
  ByolConfig byol;
  PipelineConfig pipeline;

  std::string data_path;
  std::string labels_path;
  std::string out_dir = "ncre_out";
  bool synth = false;
  SynthConfig synth_cfg;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

/// Flat "key=value" text, one key per line in a fixed order.
std::string to_kv(const RunConfig& cfg);
/// Applies "key=value" lines on top of `base`. Blank lines and lines starting
/// with '#' are skipped; unknown keys are errors.
RunConfig from_kv(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Sets one field from its textual value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> config_values(const RunConfig& cfg);

}  // namespace ncre
