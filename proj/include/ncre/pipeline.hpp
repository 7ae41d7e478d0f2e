#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ncre/byol.hpp"
#include "ncre/config.hpp"
#include "ncre/data.hpp"
#include "ncre/encoder.hpp"
#include "ncre/metrics.hpp"
#include "ncre/nn.hpp"
#include "ncre/tensor.hpp"

namespace ncre {

struct TokenizedSet {
  std::vector<TokenIds> tokens;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

TokenizedSet tokenize_all(const std::vector<LabeledSentence>& rows, const TokenizerConfig& cfg);

/// Tokenized train/eval/test splits plus the label table that defines K.
struct PreparedData {
  TokenizedSet train;
  TokenizedSet eval;
  TokenizedSet test;
  LabelTable labels;
  /// fnv1a of the three splits' TSV text; ties cached stages to their data.
  std::uint64_t fingerprint = 0;
};

PreparedData prepare_data(const DatasetSplit& split, const LabelTable& labels,
                          const TokenizerConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double anisotropy = 0.0;
  double effective_rank = 1.0;

  bool operator==(const EpochRecord&) const = default;
};

struct StageArtifacts {
  int stage = 0;
  std::vector<Parameter> checkpoint;
  std::vector<EpochRecord> history;
  /// Diagnostics of the stage's output representation on the eval split
  /// after the final epoch.
  DiagnosticsSnapshot diagnostics;
};

std::string format_history(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history(const std::string& csv);

/// Called after every non-contrastive step with the 1-based step index.
using PairStepHook = std::function<void(const NetworkPair&, std::size_t step)>;

StageArtifacts stage1_finetune(const PreparedData& data, const RunConfig& cfg);
StageArtifacts stage2_noncontrastive(const StageArtifacts& stage1, const PreparedData& data,
                                     const RunConfig& cfg, const PairStepHook& hook = {});

struct ClassifierStage {
  StageArtifacts artifacts;
  EvalReport report;
};

ClassifierStage stage3_classify(const StageArtifacts& stage2, const PreparedData& data,
                                const RunConfig& cfg);

// Rebuilding trained models from checkpoints.

/// Stage-1 encoder and its nonlinear classification head.
struct FineTuneModel {
  Encoder encoder;
  Linear head;
};

FineTuneModel build_finetune_model(const RunConfig& cfg, std::size_t num_classes);
NetworkPair build_pair(const RunConfig& cfg);
NetworkPair restore_pair(const std::vector<Parameter>& checkpoint, const RunConfig& cfg);

/// Frozen pair plus the linear classifier over its representation.
struct ClassifierModel {
  NetworkPair pair;
  Linear classifier;
};

ClassifierModel restore_classifier(const std::vector<Parameter>& checkpoint, const RunConfig& cfg);
/// Confusion-matrix report of `model` over `set`.
EvalReport evaluate(ClassifierModel& model, const TokenizedSet& set, const LabelTable& labels);

struct PipelineResult {
  EvalReport report;
  StageArtifacts stage1;
  StageArtifacts stage2;
  StageArtifacts stage3;
  /// Stages loaded from disk instead of retrained.
  std::vector<int> reused;
};

/// Runs stage 1 -> 2 -> 3. With `out_dir` set, each stage is written to
/// out_dir/stage<k>/ (checkpoint.bin, history.csv, config.txt) and a stage
/// whose directory already holds a checkpoint made from the same settings
/// and data is loaded instead of retrained. report.tsv goes to out_dir.
PipelineResult run_pipeline(const PreparedData& data, const RunConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct JointResult {
  EvalReport report;
  StageArtifacts artifacts;
};

/// Single-phase training of cls + lambda * cont over positive-pair batches
/// (classification on batch_a). With `classification_only` the
/// non-contrastive term is not built at all.
JointResult run_joint(const PreparedData& data, const RunConfig& cfg,
                      bool classification_only = false,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Config text a stage directory is keyed on: the settings stage `stage`
/// and its predecessors depend on, plus the data fingerprint.
std::string stage_snapshot(const RunConfig& cfg, int stage, std::uint64_t fingerprint);

inline constexpr std::size_t kStage1SeedTag = 1;
inline constexpr std::size_t kStage2SeedTag = 2;
inline constexpr std::size_t kStage3SeedTag = 3;
inline constexpr std::size_t kPairEpochSeedTag = 100;

}  // namespace ncre
